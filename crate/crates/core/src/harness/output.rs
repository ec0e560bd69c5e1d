//! CSV persistence and an SVG plot of BER against SNR.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::sweep::ResultRecord;
use crate::error::{Error, Result};

pub fn write_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("no records to write".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn series_label(r: &ResultRecord) -> String {
    let mut s = format!("{} ({})", r.equalizer, r.scheme);
    if r.k_rc > 1 {
        write!(s, " K={}", r.k_rc).unwrap();
    }
    if r.overhead > 0.0 {
        write!(s, " oh={:.3}", r.overhead).unwrap();
    }
    write!(s, " {} Hz", r.doppler_hz).unwrap();
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-scale BER against SNR, one polyline per equalizer configuration.
///
/// Zero BER points are drawn at the bottom of the axis; infinite SNR points
/// are skipped.
pub fn emit_plot(records: &[ResultRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("no records to plot".into()));
    }
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in records.iter().filter(|r| r.snr_db.is_finite()) {
        let label = series_label(r);
        if !series.contains_key(&label) {
            order.push(label.clone());
        }
        series.entry(label).or_default().push((r.snr_db, r.ber));
    }
    let points: Vec<(f64, f64)> = series.values().flatten().copied().collect();
    let (x0, x1) = if points.is_empty() {
        (0.0, 1.0)
    } else {
        let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) }
    };
    let min_pos = points
        .iter()
        .map(|p| p.1)
        .filter(|&b| b > 0.0)
        .fold(1.0, f64::min);
    let decade_lo = min_pos.log10().floor().min(-1.0);
    let (y_lo, y_hi) = (decade_lo, 0.0);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |b: f64| {
        let lb = if b > 0.0 { b.log10().max(y_lo) } else { y_lo };
        TOP + (y_hi - lb) / (y_hi - y_lo) * ph
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    let mut d = y_lo as i32;
    while d <= 0 {
        let y = sy(10f64.powi(d));
        writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
        d += 1;
    }
    let ticks = 6;
    for i in 0..=ticks {
        let x = x0 + (x1 - x0) * i as f64 / ticks as f64;
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x:.1}</text>"#,
            sx(x),
            TOP + ph + 18.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">SNR (dB)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">BER</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();
    for (i, label) in order.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = series[label].clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let poly: Vec<String> = pts
            .iter()
            .map(|&(x, b)| format!("{:.2},{:.2}", sx(x), sy(b)))
            .collect();
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            poly.join(" ")
        )
        .unwrap();
        for &(x, b) in &pts {
            writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(b)
            )
            .unwrap();
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            LEFT + pw + 10.0,
            LEFT + pw + 28.0,
            LEFT + pw + 32.0,
            ly + 4.0,
            escape(label)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(snr: f64, ber: f64, loss: Option<f64>) -> ResultRecord {
        ResultRecord {
            scheme: "interleaved".into(),
            equalizer: "rc_interleaved".into(),
            snr_db: snr,
            doppler_hz: 555.0,
            k_rc: 7,
            overhead: 0.046875,
            n_t: 1,
            n_r: 1,
            n_frames: 600,
            n_bits: 1_000_000,
            n_errors: (ber * 1e6) as u64,
            ber,
            mean_train_loss: loss,
            seed: 42,
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let recs = vec![rec(0.0, 0.1234, Some(0.3)), rec(30.0, 0.0, None), rec(f64::INFINITY, 1e-7, Some(1.0 / 3.0))];
        write_csv(&recs, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), recs);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "scheme,equalizer,snr_db,doppler_hz,k_rc,overhead,n_t,n_r,n_frames,n_bits,n_errors,ber,mean_train_loss,seed"
        );
        assert!(text.lines().nth(2).unwrap().contains(",0.0,,42"));
        assert!(write_csv(&[], &path).is_err());
        assert!(write_csv(&recs, &dir.path().join("missing/dir/r.csv")).is_err());
    }

    #[test]
    fn plot_is_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        emit_plot(&[rec(0.0, 0.2, None), rec(10.0, 0.0, None)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        assert!(text.contains("<polyline"));
        assert!(emit_plot(&[], &path).is_err());
    }
}
