//! Doubly-selective channel models.
//!
//! Two views of the same multipath channel are provided: the delay-Doppler
//! kernel that acts on a [`DdFrame`] by 2D circular convolution, and the
//! time-domain tapped delay line with per-path Doppler that acts on modem
//! samples. Time origin `t = 0` is the first sample after the cyclic prefix.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dd::{DdFrame, WaveformConfig};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{dft2, idft2, CMat, ZERO};

/// One propagation path: integer sample delay, Doppler shift and complex gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub delay_samples: usize,
    pub doppler_hz: f64,
    #[serde(with = "complex_pair")]
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathList {
    pub paths: Vec<Path>,
    pub max_doppler_hz: f64,
}

impl PathList {
    pub fn new(paths: Vec<Path>, max_doppler_hz: f64) -> Self {
        Self {
            paths,
            max_doppler_hz,
        }
    }

    /// Single static path with unit gain.
    pub fn identity() -> Self {
        Self::new(
            vec![Path {
                delay_samples: 0,
                doppler_hz: 0.0,
                gain: Complex64::new(1.0, 0.0),
            }],
            0.0,
        )
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay_samples).max().unwrap_or(0)
    }

    /// Checks the path list against a waveform: every delay must be covered by
    /// the cyclic prefix and every Doppler bounded by `max_doppler_hz`.
    pub fn validate(&self, cfg: &WaveformConfig) -> Result<()> {
        for (i, p) in self.paths.iter().enumerate() {
            if p.delay_samples > cfg.cp_len {
                return Err(Error::Config(format!(
                    "path {i}: delay {} exceeds cp_len {}",
                    p.delay_samples, cfg.cp_len
                )));
            }
            if p.doppler_hz.abs() > self.max_doppler_hz * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::Config(format!(
                    "path {i}: |doppler| {} exceeds max {}",
                    p.doppler_hz, self.max_doppler_hz
                )));
            }
            if !(p.gain.re.is_finite() && p.gain.im.is_finite()) {
                return Err(Error::Config(format!("path {i}: gain is not finite")));
            }
        }
        Ok(())
    }

    /// Rescales every Doppler so the maximum becomes `max_doppler_hz`.
    pub fn with_max_doppler(&self, max_doppler_hz: f64) -> Self {
        let scale = if self.max_doppler_hz > 0.0 {
            max_doppler_hz / self.max_doppler_hz
        } else {
            0.0
        };
        Self {
            paths: self
                .paths
                .iter()
                .map(|p| Path {
                    doppler_hz: p.doppler_hz * scale,
                    ..*p
                })
                .collect(),
            max_doppler_hz,
        }
    }
}

/// Channel response sampled on the delay-Doppler grid, stored as an `m x n`
/// matrix (rows = delay bin, columns = Doppler bin) like a [`DdFrame`].
#[derive(Debug, Clone, PartialEq)]
pub struct DdKernel {
    values: CMat,
}

/// A nonzero kernel entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub doppler_idx: usize,
    pub delay_idx: usize,
    pub gain: Complex64,
}

impl DdKernel {
    pub fn from_matrix(values: CMat) -> Result<Self> {
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Config("kernel entries must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn from_taps(m: usize, n: usize, taps: &[Tap]) -> Result<Self> {
        let mut values = CMat::zeros(m, n);
        for t in taps {
            if t.delay_idx >= m || t.doppler_idx >= n {
                return Err(dim_err(
                    format!("tap inside {m}x{n}"),
                    format!("({}, {})", t.delay_idx, t.doppler_idx),
                ));
            }
            values[(t.delay_idx, t.doppler_idx)] += t.gain;
        }
        Self::from_matrix(values)
    }

    /// Kernel of the identity channel, `NM` at the origin.
    pub fn identity(m: usize, n: usize) -> Self {
        let mut values = CMat::zeros(m, n);
        values[(0, 0)] = Complex64::new((m * n) as f64, 0.0);
        Self { values }
    }

    pub fn values(&self) -> &CMat {
        &self.values
    }

    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    /// Nonzero entries.
    pub fn taps(&self) -> Vec<Tap> {
        let (m, n) = self.values.shape();
        let mut out = Vec::new();
        for k in 0..n {
            for l in 0..m {
                let g = self.values[(l, k)];
                if g != ZERO {
                    out.push(Tap {
                        doppler_idx: k,
                        delay_idx: l,
                        gain: g,
                    });
                }
            }
        }
        out
    }
}

/// Samples the delay-Doppler spreading function of `paths` on the frame grid.
///
/// Each path lands in delay bin `delay_samples`. Its Doppler `nu` is
/// expressed in bins, `kappa = nu * N * dT`, and mapped onto the `N` Doppler
/// bins through the periodic sinc `D(k) = 1/N sum_n e^{j2pi(kappa-k)n/N}`;
/// integer `kappa` gives a single bin. The per-path scalar also carries the
/// mean of the Doppler phasor across the `M` samples of one pulse, which is
/// the best single-coefficient fit of the intra-pulse phase drift under
/// rectangular pulses.
pub fn kernel_from_paths(p: &PathList, cfg: &WaveformConfig) -> Result<DdKernel> {
    let (m, n) = (cfg.m, cfg.n);
    let nm = (n * m) as f64;
    let mut values = CMat::zeros(m, n);
    for path in &p.paths {
        if path.delay_samples >= m {
            return Err(Error::Config(format!(
                "path delay {} outside the {}-bin delay grid",
                path.delay_samples, m
            )));
        }
        let kappa = path.doppler_hz * n as f64 * cfg.delta_t;
        let intra = (0..m)
            .map(|l| Complex64::from_polar(1.0, 2.0 * PI * kappa * l as f64 / nm))
            .sum::<Complex64>()
            / m as f64;
        let scale = path.gain * intra * nm;
        let nearest = kappa.round();
        if (kappa - nearest).abs() < 1e-9 {
            let k = nearest.rem_euclid(n as f64) as usize;
            values[(path.delay_samples, k)] += scale;
        } else {
            for k in 0..n {
                values[(path.delay_samples, k)] += scale * dirichlet(kappa - k as f64, n);
            }
        }
    }
    DdKernel::from_matrix(values)
}

/// `1/N sum_{i<N} e^{j2pi u i / N}` in closed form.
fn dirichlet(u: f64, n: usize) -> Complex64 {
    let nf = n as f64;
    let den = Complex64::from_polar(1.0, 2.0 * PI * u / nf) - 1.0;
    if den.norm() < 1e-14 {
        return Complex64::new(1.0, 0.0);
    }
    (Complex64::from_polar(1.0, 2.0 * PI * u) - 1.0) / (den * nf)
}

/// `y[k,l] = 1/(NM) sum x[k',l'] h[k-k', l-l']` with both axes periodized.
///
/// Sparse kernels use the tap-by-tap shift form; dense ones go through the
/// 2D DFT.
pub fn apply_dd_kernel(x: &DdFrame, h: &DdKernel) -> Result<DdFrame> {
    check_kernel_shape(x, h)?;
    let nnz = h.values.iter().filter(|v| **v != ZERO).count();
    if nnz * 4 <= h.n() + h.m() {
        apply_dd_kernel_direct(x, h)
    } else {
        apply_dd_kernel_fft(x, h)
    }
}

fn check_kernel_shape(x: &DdFrame, h: &DdKernel) -> Result<()> {
    if x.values().shape() != h.values.shape() {
        return Err(dim_err(
            format!("{}x{}", h.m(), h.n()),
            format!("{}x{}", x.m(), x.n()),
        ));
    }
    Ok(())
}

/// Sum of cyclically shifted copies of `x`, one per nonzero tap.
pub fn apply_dd_kernel_direct(x: &DdFrame, h: &DdKernel) -> Result<DdFrame> {
    check_kernel_shape(x, h)?;
    let (m, n) = (x.m(), x.n());
    let norm = 1.0 / (m * n) as f64;
    let mut y = CMat::zeros(m, n);
    for tap in h.taps() {
        let g = tap.gain * norm;
        for k in 0..n {
            let ks = (k + n - tap.doppler_idx) % n;
            for l in 0..m {
                let ls = (l + m - tap.delay_idx) % m;
                y[(l, k)] += g * x[(ls, ks)];
            }
        }
    }
    Ok(DdFrame::from_matrix(y))
}

/// Circular convolution diagonalized by the 2D DFT.
pub fn apply_dd_kernel_fft(x: &DdFrame, h: &DdKernel) -> Result<DdFrame> {
    check_kernel_shape(x, h)?;
    let norm = 1.0 / (x.m() * x.n()) as f64;
    let xf = dft2(x.values());
    let hf = dft2(&h.values);
    let prod = xf.component_mul(&hf);
    let mut y = idft2(&prod);
    y.iter_mut().for_each(|v| *v *= norm);
    Ok(DdFrame::from_matrix(y))
}

/// Tapped delay line with per-path Doppler:
/// `r[i] = sum_p g_p s[i - d_p] e^{j2pi nu_p (t0 + i/fs)}`, zero before index 0.
pub fn apply_tdl(samples: &[Complex64], p: &PathList, t0: f64, sample_rate: f64) -> Vec<Complex64> {
    let mut out = vec![ZERO; samples.len()];
    for path in &p.paths {
        let d = path.delay_samples;
        let w = 2.0 * PI * path.doppler_hz;
        for i in d..samples.len() {
            let t = t0 + i as f64 / sample_rate;
            out[i] += path.gain * samples[i - d] * Complex64::from_polar(1.0, w * t);
        }
    }
    out
}

/// Per-sample noise variance giving `snr_db` relative to the mean power of `samples`.
pub fn noise_variance(samples: &[Complex64], snr_db: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to add noise to".into()));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Config(format!("invalid snr_db {snr_db}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let power = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
    if power == 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(power / 10f64.powf(snr_db / 10.0))
}

/// Adds circularly symmetric complex Gaussian noise of variance `var`.
pub fn add_noise<R: Rng + ?Sized>(samples: &[Complex64], var: f64, rng: &mut R) -> Vec<Complex64> {
    if var == 0.0 {
        return samples.to_vec();
    }
    let sd = (var / 2.0).sqrt();
    samples
        .iter()
        .map(|s| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            s + Complex64::new(re * sd, im * sd)
        })
        .collect()
}

/// AWGN at `snr_db` measured against the input power. `f64::INFINITY` disables noise.
pub fn add_awgn<R: Rng + ?Sized>(
    samples: &[Complex64],
    snr_db: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let var = noise_variance(samples, snr_db)?;
    Ok(add_noise(samples, var, rng))
}

/// `n_r x n_t` grid of per-link channels, stored row-major by receive antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoConfig<L> {
    pub n_t: usize,
    pub n_r: usize,
    links: Vec<L>,
}

impl<L> MimoConfig<L> {
    pub fn new(n_t: usize, n_r: usize, links: Vec<L>) -> Result<Self> {
        if n_t == 0 || n_r == 0 {
            return Err(Error::Config("antenna counts must be at least 1".into()));
        }
        if links.len() != n_t * n_r {
            return Err(dim_err(format!("{} links", n_t * n_r), links.len()));
        }
        Ok(Self { n_t, n_r, links })
    }

    pub fn siso(link: L) -> Self {
        Self {
            n_t: 1,
            n_r: 1,
            links: vec![link],
        }
    }

    pub fn link(&self, rx: usize, tx: usize) -> &L {
        &self.links[rx * self.n_t + tx]
    }

    pub fn links(&self) -> &[L] {
        &self.links
    }

    pub fn map<T>(&self, f: impl FnMut(&L) -> T) -> MimoConfig<T> {
        MimoConfig {
            n_t: self.n_t,
            n_r: self.n_r,
            links: self.links.iter().map(f).collect(),
        }
    }

    pub fn try_map<T>(&self, f: impl FnMut(&L) -> Result<T>) -> Result<MimoConfig<T>> {
        Ok(MimoConfig {
            n_t: self.n_t,
            n_r: self.n_r,
            links: self.links.iter().map(f).collect::<Result<_>>()?,
        })
    }
}

/// `y_r = sum_t h_{r,t} * x_t` in the delay-Doppler domain.
pub fn apply_mimo_kernel(x: &[DdFrame], cfg: &MimoConfig<DdKernel>) -> Result<Vec<DdFrame>> {
    if x.len() != cfg.n_t {
        return Err(dim_err(format!("{} transmit frames", cfg.n_t), x.len()));
    }
    (0..cfg.n_r)
        .map(|r| {
            let mut acc: Option<CMat> = None;
            for (t, xt) in x.iter().enumerate() {
                let y = apply_dd_kernel(xt, cfg.link(r, t))?.into_inner();
                acc = Some(match acc {
                    Some(a) => a + y,
                    None => y,
                });
            }
            Ok(DdFrame::from_matrix(acc.expect("n_t >= 1")))
        })
        .collect()
}

/// `r_r = sum_t TDL_{r,t}(s_t)` in the time domain.
pub fn apply_mimo_tdl(
    x: &[Vec<Complex64>],
    cfg: &MimoConfig<PathList>,
    t0: f64,
    sample_rate: f64,
) -> Result<Vec<Vec<Complex64>>> {
    if x.len() != cfg.n_t {
        return Err(dim_err(format!("{} transmit streams", cfg.n_t), x.len()));
    }
    let len = x[0].len();
    if x.iter().any(|s| s.len() != len) {
        return Err(Error::Config("transmit streams differ in length".into()));
    }
    Ok((0..cfg.n_r)
        .map(|r| {
            let mut acc = vec![ZERO; len];
            for (t, xt) in x.iter().enumerate() {
                for (a, v) in acc.iter_mut().zip(apply_tdl(xt, cfg.link(r, t), t0, sample_rate)) {
                    *a += v;
                }
            }
            acc
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerProfile {
    #[default]
    Exponential,
    Uniform,
}

/// Delay spread of the reference channel profile, in seconds.
pub const REFERENCE_DELAY_SPREAD_S: f64 = 10e-9;

/// Rounds a delay spread in seconds to whole samples.
pub fn spread_in_samples(spread_s: f64, sample_rate: f64) -> usize {
    (spread_s * sample_rate).round().max(0.0) as usize
}

/// Seeded generic tapped-delay-line generator.
///
/// Path delays are integers spread evenly over `[0, delay_spread_samples]`,
/// path powers follow the chosen profile (exponential decays to `e^-2` at the
/// largest delay) and sum to one, gains are Rayleigh, and Dopplers are
/// `max_doppler_hz * cos(theta)` with `theta` uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGenerator {
    pub n_paths: usize,
    pub delay_spread_samples: usize,
    #[serde(default)]
    pub profile: PowerProfile,
}

impl Default for PathGenerator {
    fn default() -> Self {
        Self {
            n_paths: 6,
            delay_spread_samples: 0,
            profile: PowerProfile::Exponential,
        }
    }
}

impl PathGenerator {
    pub fn delays(&self) -> Vec<usize> {
        let np = self.n_paths.max(1);
        if np == 1 {
            return vec![0];
        }
        (0..np)
            .map(|i| {
                ((i * self.delay_spread_samples) as f64 / (np - 1) as f64).round() as usize
            })
            .collect()
    }

    pub fn powers(&self) -> Vec<f64> {
        let delays = self.delays();
        let raw: Vec<f64> = delays
            .iter()
            .map(|&d| match self.profile {
                PowerProfile::Uniform => 1.0,
                PowerProfile::Exponential if self.delay_spread_samples == 0 => 1.0,
                PowerProfile::Exponential => {
                    (-2.0 * d as f64 / self.delay_spread_samples as f64).exp()
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, max_doppler_hz: f64, rng: &mut R) -> PathList {
        let paths = self
            .delays()
            .into_iter()
            .zip(self.powers())
            .map(|(delay_samples, power)| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                let gain = Complex64::new(re, im) * (power / 2.0).sqrt();
                let theta = rng.random_range(0.0..2.0 * PI);
                Path {
                    delay_samples,
                    doppler_hz: max_doppler_hz * theta.cos(),
                    gain,
                }
            })
            .collect();
        PathList::new(paths, max_doppler_hz)
    }
}

/// Serde helper writing a complex number as `[re, im]`.
pub mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [c.re, c.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}
