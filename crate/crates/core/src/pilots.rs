//! Pilot patterns, frame assembly for the interleaved and superimposed pilot
//! schemes, and extraction of the per-frame training/testing datasets.
//!
//! The pilot mask `omega` lives on the same `m x n` grid as a [`DdFrame`].
//! For the interleaved scheme it marks delay-Doppler cells; for the
//! superimposed scheme it marks time-frequency cells.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::dd::{apply_mask, isfft, sfft, DdFrame, TfGrid};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{energy, CMat, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// Per-column contiguous blocks whose start row steps down diagonally.
    Staircase,
    /// Full Doppler columns.
    BlockwiseColumns,
    /// Full delay rows.
    BlockRows,
    /// Regular rectangular lattice, used for time-frequency pilot grids.
    Lattice,
    /// Every column holds evenly spaced pilots whose start row steps down
    /// diagonally; the spread-out counterpart of [`PatternKind::Staircase`].
    Scattered,
}

impl std::fmt::Display for PatternKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PatternKind::Staircase => "staircase",
            PatternKind::BlockwiseColumns => "blockwise_columns",
            PatternKind::BlockRows => "block_rows",
            PatternKind::Lattice => "lattice",
            PatternKind::Scattered => "scattered",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotScheme {
    Interleaved,
    Superimposed,
}

impl std::fmt::Display for PilotScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PilotScheme::Interleaved => "interleaved",
            PilotScheme::Superimposed => "superimposed",
        })
    }
}

/// Binary pilot indicator over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    omega: DMatrix<bool>,
    kind: PatternKind,
    /// Placement offset drawn from the pattern seed.
    pub offset: usize,
}

impl PilotPattern {
    pub fn new(omega: DMatrix<bool>, kind: PatternKind) -> Result<Self> {
        let ones = omega.iter().filter(|&&b| b).count();
        if ones == 0 || ones == omega.len() {
            return Err(Error::Config(
                "pilot mask needs at least one pilot and one data cell".into(),
            ));
        }
        let (m, n) = omega.shape();
        match kind {
            PatternKind::BlockwiseColumns => {
                for k in 0..n {
                    let c = omega.column(k);
                    if c.iter().any(|&b| b) && !c.iter().all(|&b| b) {
                        return Err(Error::Config(format!("column {k} is partially filled")));
                    }
                }
            }
            PatternKind::BlockRows => {
                for l in 0..m {
                    let r = omega.row(l);
                    if r.iter().any(|&b| b) && !r.iter().all(|&b| b) {
                        return Err(Error::Config(format!("row {l} is partially filled")));
                    }
                }
            }
            _ => {}
        }
        Ok(Self {
            omega,
            kind,
            offset: 0,
        })
    }

    pub fn omega(&self) -> &DMatrix<bool> {
        &self.omega
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.omega.nrows()
    }

    pub fn n(&self) -> usize {
        self.omega.ncols()
    }

    pub fn count(&self) -> usize {
        self.omega.iter().filter(|&&b| b).count()
    }

    pub fn is_pilot(&self, l: usize, k: usize) -> bool {
        self.omega[(l, k)]
    }

    /// Pilot cells in column-major order.
    pub fn pilot_cells(&self) -> Vec<(usize, usize)> {
        self.cells(true)
    }

    /// Data cells (complement support) in column-major order.
    pub fn data_cells(&self) -> Vec<(usize, usize)> {
        self.cells(false)
    }

    fn cells(&self, pilot: bool) -> Vec<(usize, usize)> {
        let (m, n) = self.omega.shape();
        (0..n)
            .flat_map(|k| (0..m).map(move |l| (l, k)))
            .filter(|&(l, k)| self.omega[(l, k)] == pilot)
            .collect()
    }

    /// The mask as a complex 0/1 matrix.
    pub fn as_complex(&self) -> CMat {
        self.omega.map(|b| if b { Complex64::new(1.0, 0.0) } else { ZERO })
    }

    /// Rows that carry at least one pilot.
    pub fn pilot_rows(&self) -> Vec<usize> {
        (0..self.m())
            .filter(|&l| self.omega.row(l).iter().any(|&b| b))
            .collect()
    }

    /// Columns that carry at least one pilot.
    pub fn pilot_columns(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&k| self.omega.column(k).iter().any(|&b| b))
            .collect()
    }
}

/// Pilot overhead `|omega| / (M N)`.
pub fn overhead(p: &PilotPattern) -> f64 {
    p.count() as f64 / (p.m() * p.n()) as f64
}

/// Builds a pattern whose overhead is the nearest value the kind's granularity
/// allows (cells, whole columns or whole rows).
///
/// A target that rounds to zero granules is rejected; one that rounds to the
/// full grid is clamped to leave a single data granule.
pub fn make_pattern(
    kind: PatternKind,
    m: usize,
    n: usize,
    target_overhead: f64,
    seed: u64,
) -> Result<PilotPattern> {
    if !(target_overhead > 0.0 && target_overhead < 1.0) {
        return Err(Error::Config(format!(
            "pilot overhead {target_overhead} must lie in (0, 1)"
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::Config("empty grid".into()));
    }
    let unreachable = || Error::UnreachableOverhead {
        kind: kind.to_string(),
        target: target_overhead,
        m,
        n,
    };
    let units = match kind {
        PatternKind::Staircase | PatternKind::Lattice | PatternKind::Scattered => m * n,
        PatternKind::BlockwiseColumns => n,
        PatternKind::BlockRows => m,
    };
    let mut count = (target_overhead * units as f64).round() as usize;
    if count == 0 || units < 2 {
        return Err(unreachable());
    }
    count = count.min(units - 1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = DMatrix::from_element(m, n, false);
    let mut offset = 0;
    match kind {
        PatternKind::Staircase => {
            offset = rng.random_range(0..m);
            let (base, rem) = (count / n, count % n);
            for k in 0..n {
                let len = base + usize::from(k < rem);
                let start = offset + k * m / n;
                for i in 0..len {
                    omega[((start + i) % m, k)] = true;
                }
            }
        }
        PatternKind::Scattered => {
            offset = rng.random_range(0..m);
            let (base, rem) = (count / n, count % n);
            for k in 0..n {
                let len = base + usize::from(k < rem);
                let start = offset + k * m / n;
                for i in 0..len {
                    omega[((start + i * m / len) % m, k)] = true;
                }
            }
        }
        PatternKind::BlockwiseColumns => {
            offset = rng.random_range(0..n);
            for i in 0..count {
                omega.column_mut((offset + i * n / count) % n).fill(true);
            }
        }
        PatternKind::BlockRows => {
            offset = rng.random_range(0..m);
            for i in 0..count {
                omega.row_mut((offset + i * m / count) % m).fill(true);
            }
        }
        PatternKind::Lattice => {
            if m < 2 || n < 2 {
                return Err(unreachable());
            }
            let cols = n.div_ceil(2).max(2);
            let rows = ((count as f64 / cols as f64).round() as usize).clamp(2, m);
            if rows * cols >= m * n {
                return Err(unreachable());
            }
            for i in 0..rows {
                let l = (i * (m - 1) + (rows - 1) / 2) / (rows - 1);
                for j in 0..cols {
                    let k = (j * (n - 1) + (cols - 1) / 2) / (cols - 1);
                    omega[(l, k)] = true;
                }
            }
        }
    }
    let mut p = PilotPattern::new(omega, kind)?;
    p.offset = offset;
    Ok(p)
}

/// Known pilot symbols for the interleaved scheme, regenerable from `pilot_seed`.
///
/// Returns an `m x n` matrix holding pseudo-random constellation points on
/// the pilot support and zero elsewhere.
pub fn pilot_symbols(p: &PilotPattern, c: &Constellation, pilot_seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(pilot_seed);
    let mut out = CMat::zeros(p.m(), p.n());
    let pts = c.points();
    for (l, k) in p.pilot_cells() {
        out[(l, k)] = pts[rng.random_range(0..pts.len())];
    }
    out
}

/// Target and ground-truth matrices known for one transmit antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct TxParts {
    /// Desired readout output on the pilots.
    pub x_train: CMat,
    /// Data symbols to detect.
    pub x_test: CMat,
}

/// Equalizer inputs derived from one received frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RxParts {
    pub y_train: CMat,
    pub y_test: CMat,
}

/// Per-frame training and testing data, stacked vertically over antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDataset {
    /// `(M n_t) x N` training targets.
    pub x_train: CMat,
    /// `(M n_r) x N` training inputs.
    pub y_train: CMat,
    /// `(M n_t) x N` data ground truth.
    pub x_test: CMat,
    /// `(M n_r) x N` inputs for detection.
    pub y_test: CMat,
    pub scheme: PilotScheme,
    pub mask: PilotPattern,
    pub n_t: usize,
    pub n_r: usize,
}

/// Interleaved frame: seeded pilots on `omega`, mapped data bits on its complement.
pub fn build_interleaved(
    data_bits: &[u8],
    p: &PilotPattern,
    c: &Constellation,
    pilot_seed: u64,
) -> Result<(DdFrame, TxParts)> {
    let data_cells = p.data_cells();
    let needed = data_cells.len() * c.bits_per_symbol();
    if data_bits.len() != needed {
        return Err(Error::BitCount {
            bits: data_bits.len(),
            needed,
        });
    }
    let symbols = c.map_bits(data_bits)?;
    let x_train = pilot_symbols(p, c, pilot_seed);
    let mut x_test = CMat::zeros(p.m(), p.n());
    for (&(l, k), s) in data_cells.iter().zip(symbols) {
        x_test[(l, k)] = s;
    }
    let frame = DdFrame::from_matrix(&x_train + &x_test);
    Ok((frame, TxParts { x_train, x_test }))
}

/// `-SFFT(ISFFT(x_test) . omega)`, the term that clears the data from the
/// pilot's time-frequency support.
pub fn helper_interference(x_test: &DdFrame, p: &PilotPattern) -> DdFrame {
    let tf = isfft(x_test);
    let masked = apply_mask(tf.values(), p.omega(), true);
    let mut aid = sfft(&TfGrid::from_matrix(masked)).into_inner();
    aid.iter_mut().for_each(|v| *v = -*v);
    DdFrame::from_matrix(aid)
}

/// `SFFT(c . omega)`.
pub fn superimposed_pilot(p: &PilotPattern, amplitude: f64) -> CMat {
    let tf = p.as_complex() * Complex64::new(amplitude, 0.0);
    sfft(&TfGrid::from_matrix(tf)).into_inner()
}

/// A superimposed-pilot frame and its pilot amplitude `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperimposedFrame {
    pub frame: DdFrame,
    pub amplitude: f64,
    pub parts: TxParts,
}

/// `X = SFFT(c omega) + x_test + helper_interference(x_test)` with `c` set so
/// the pilot carries `power_fraction` of the frame energy.
pub fn build_superimposed(
    x_test: &DdFrame,
    p: &PilotPattern,
    power_fraction: f64,
) -> Result<SuperimposedFrame> {
    if !(power_fraction > 0.0 && power_fraction < 1.0) {
        return Err(Error::Config(format!(
            "pilot power fraction {power_fraction} must lie in (0, 1)"
        )));
    }
    x_test.check_shape(p.m(), p.n())?;
    let data_energy = energy(&apply_mask(isfft(x_test).values(), p.omega(), false));
    // Pilot and data occupy disjoint time-frequency cells, so the energies add.
    let amplitude =
        (power_fraction * data_energy / ((1.0 - power_fraction) * p.count() as f64)).sqrt();
    build_superimposed_with_amplitude(x_test, p, amplitude)
}

/// Superimposed frame with an explicit pilot amplitude.
pub fn build_superimposed_with_amplitude(
    x_test: &DdFrame,
    p: &PilotPattern,
    amplitude: f64,
) -> Result<SuperimposedFrame> {
    x_test.check_shape(p.m(), p.n())?;
    let mut tf = isfft(x_test).into_inner();
    for (l, k) in p.pilot_cells() {
        tf[(l, k)] = Complex64::new(amplitude, 0.0);
    }
    let frame = sfft(&TfGrid::from_matrix(tf));
    Ok(SuperimposedFrame {
        frame,
        amplitude,
        parts: TxParts {
            x_train: superimposed_pilot(p, amplitude),
            x_test: x_test.values().clone(),
        },
    })
}

/// Pilot amplitude the receiver assumes for a given power fraction, from the
/// expected (not measured) data energy on the complement support.
pub fn nominal_amplitude(p: &PilotPattern, power_fraction: f64, symbol_energy: f64) -> f64 {
    let data_cells = (p.m() * p.n() - p.count()) as f64;
    (power_fraction * symbol_energy * data_cells / ((1.0 - power_fraction) * p.count() as f64))
        .sqrt()
}

/// Equalizer inputs for one received frame.
pub fn rx_parts(y: &DdFrame, scheme: PilotScheme, p: &PilotPattern) -> Result<RxParts> {
    y.check_shape(p.m(), p.n())?;
    let y_train = match scheme {
        PilotScheme::Interleaved => y.values().clone(),
        PilotScheme::Superimposed => {
            let tf = apply_mask(isfft(y).values(), p.omega(), true);
            sfft(&TfGrid::from_matrix(tf)).into_inner()
        }
    };
    Ok(RxParts {
        y_train,
        y_test: y.values().clone(),
    })
}

/// SISO dataset from a received frame and the receiver-known pilot parts.
pub fn extract_datasets(
    y: &DdFrame,
    scheme: PilotScheme,
    p: &PilotPattern,
    known: &TxParts,
) -> Result<FrameDataset> {
    stack_mimo(std::slice::from_ref(known), &[rx_parts(y, scheme, p)?], scheme, p)
}

fn check_parts(known: &TxParts, scheme: PilotScheme, p: &PilotPattern) -> Result<()> {
    let shape = (p.m(), p.n());
    if known.x_train.shape() != shape || known.x_test.shape() != shape {
        return Err(dim_err(
            format!("{}x{}", shape.0, shape.1),
            format!("{:?}", known.x_train.shape()),
        ));
    }
    if scheme == PilotScheme::Interleaved {
        let leaks = p
            .data_cells()
            .iter()
            .any(|&(l, k)| known.x_train[(l, k)] != ZERO);
        if leaks {
            return Err(Error::Scheme(
                "interleaved targets must vanish off the pilot support".into(),
            ));
        }
    }
    Ok(())
}

/// Stacks per-antenna targets (`n_t` blocks) and inputs (`n_r` blocks) vertically.
pub fn stack_mimo(
    tx: &[TxParts],
    rx: &[RxParts],
    scheme: PilotScheme,
    p: &PilotPattern,
) -> Result<FrameDataset> {
    if tx.is_empty() || rx.is_empty() {
        return Err(Error::Config("need at least one antenna on each side".into()));
    }
    for t in tx {
        check_parts(t, scheme, p)?;
    }
    for r in rx {
        if r.y_train.shape() != (p.m(), p.n()) || r.y_test.shape() != (p.m(), p.n()) {
            return Err(dim_err(
                format!("{}x{}", p.m(), p.n()),
                format!("{:?}", r.y_train.shape()),
            ));
        }
    }
    Ok(FrameDataset {
        x_train: vstack(tx.iter().map(|t| &t.x_train)),
        y_train: vstack(rx.iter().map(|r| &r.y_train)),
        x_test: vstack(tx.iter().map(|t| &t.x_test)),
        y_test: vstack(rx.iter().map(|r| &r.y_test)),
        scheme,
        mask: p.clone(),
        n_t: tx.len(),
        n_r: rx.len(),
    })
}

pub fn vstack<'a>(blocks: impl Iterator<Item = &'a CMat> + Clone) -> CMat {
    let total: usize = blocks.clone().map(|b| b.nrows()).sum();
    let cols = blocks.clone().next().map(|b| b.ncols()).unwrap_or(0);
    let mut out = CMat::zeros(total, cols);
    let mut row = 0;
    for b in blocks {
        out.view_mut((row, 0), b.shape()).copy_from(b);
        row += b.nrows();
    }
    out
}

/// Splits a vertical stack of `count` equal blocks.
pub fn unstack(stacked: &CMat, count: usize) -> Result<Vec<CMat>> {
    if count == 0 || !stacked.nrows().is_multiple_of(count) {
        return Err(dim_err(
            format!("rows divisible by {count}"),
            stacked.nrows(),
        ));
    }
    let m = stacked.nrows() / count;
    Ok((0..count)
        .map(|i| stacked.rows(i * m, m).into_owned())
        .collect())
}
