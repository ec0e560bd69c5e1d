//! Per-frame equalizers: the reservoir equalizer for both pilot schemes and
//! the classical baselines it is compared against.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::DdKernel;
use crate::constellation::Constellation;
use crate::dd::{isfft, sfft, DdFrame, TfGrid};
use crate::error::{dim_err, Error, Result};
use crate::esn::{
    detect, doppler_dft, narrow, partition_multi_rc, predict, train_with_delay_search, widen,
    Reservoir, ReservoirConfig,
};
use crate::linalg::{dft2, idft2, CMat, ZERO};
use crate::pilots::{unstack, FrameDataset, PilotPattern, PilotScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualizerKind {
    RcInterleaved,
    RcSuperimposed,
    DdMmsePerfectCsi,
    TfLmmseEstimated,
}

impl EqualizerKind {
    /// Pilot scheme the reservoir kinds are trained with.
    pub fn rc_scheme(self) -> Option<PilotScheme> {
        match self {
            EqualizerKind::RcInterleaved => Some(PilotScheme::Interleaved),
            EqualizerKind::RcSuperimposed => Some(PilotScheme::Superimposed),
            _ => None,
        }
    }

    pub fn is_rc(self) -> bool {
        self.rc_scheme().is_some()
    }
}

impl std::fmt::Display for EqualizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EqualizerKind::RcInterleaved => "rc_interleaved",
            EqualizerKind::RcSuperimposed => "rc_superimposed",
            EqualizerKind::DdMmsePerfectCsi => "dd_mmse_perfect_csi",
            EqualizerKind::TfLmmseEstimated => "tf_lmmse_estimated",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerSpec {
    pub kind: EqualizerKind,
    pub rc: Option<ReservoirConfig>,
    pub k_rc: usize,
}

impl EqualizerSpec {
    pub fn rc(kind: EqualizerKind, cfg: ReservoirConfig, k_rc: usize) -> Result<Self> {
        let spec = Self {
            kind,
            rc: Some(cfg),
            k_rc,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn baseline(kind: EqualizerKind) -> Result<Self> {
        let spec = Self {
            kind,
            rc: None,
            k_rc: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_rc == 0 {
            return Err(Error::Config("k_rc must be at least 1".into()));
        }
        if self.kind.is_rc() && self.rc.is_none() {
            return Err(Error::Config(format!("{} needs a reservoir config", self.kind)));
        }
        if let Some(cfg) = &self.rc {
            cfg.validate()?;
        }
        Ok(())
    }
}

/// Everything an equalizer may consume for one received frame.
#[derive(Debug, Clone, Copy)]
pub enum FrameInput<'a> {
    /// Pilot dataset for the reservoir kinds.
    Dataset(&'a FrameDataset),
    /// Received frame and the true kernel, with noise variance relative to
    /// the symbol energy.
    PerfectCsi {
        y: &'a DdFrame,
        h: &'a DdKernel,
        noise_var: f64,
    },
    /// Received frame carrying time-frequency pilots of the given amplitude.
    TfPilots {
        y: &'a DdFrame,
        pattern: &'a PilotPattern,
        amplitude: f64,
        noise_var: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Training loss per delay, one vector per reservoir.
    pub losses: Vec<Vec<f64>>,
    /// Chosen readout delay per reservoir.
    pub chosen_delays: Vec<usize>,
    /// Largest readout condition number per reservoir.
    pub condition: Vec<f64>,
    /// Readout columns that had no pilot support.
    pub empty_columns: usize,
}

impl Diagnostics {
    /// Mean over reservoirs of the loss at the chosen delay.
    pub fn mean_train_loss(&self) -> Option<f64> {
        if self.losses.is_empty() {
            return None;
        }
        let total: f64 = self
            .losses
            .iter()
            .zip(&self.chosen_delays)
            .map(|(l, &d)| l[d])
            .sum();
        Some(total / self.losses.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    /// Hard decisions, one `M x N` frame per transmit antenna.
    pub detected: Vec<DdFrame>,
    pub diagnostics: Diagnostics,
}

/// Equalizes one frame with the configured equalizer.
pub fn equalize_frame(
    spec: &EqualizerSpec,
    input: FrameInput<'_>,
    c: &Constellation,
) -> Result<Equalized> {
    spec.validate()?;
    let mismatch = || Error::Scheme(format!("input does not fit equalizer {}", spec.kind));
    match (spec.kind, input) {
        (EqualizerKind::RcInterleaved | EqualizerKind::RcSuperimposed, FrameInput::Dataset(ds)) => {
            if spec.kind.rc_scheme() != Some(ds.scheme) {
                return Err(Error::Scheme(format!(
                    "{} cannot use a {} dataset",
                    spec.kind, ds.scheme
                )));
            }
            rc_equalize(spec, ds, c)
        }
        (EqualizerKind::DdMmsePerfectCsi, FrameInput::PerfectCsi { y, h, noise_var }) => {
            let soft = dd_mmse_perfect_csi(y, h, noise_var)?;
            Ok(Equalized {
                detected: vec![quantize_frame(&soft, c)],
                diagnostics: Diagnostics::default(),
            })
        }
        (
            EqualizerKind::TfLmmseEstimated,
            FrameInput::TfPilots {
                y,
                pattern,
                amplitude,
                noise_var,
            },
        ) => {
            let soft = tf_lmmse_estimated(y, pattern, amplitude, noise_var)?;
            Ok(Equalized {
                detected: vec![quantize_frame(&soft, c)],
                diagnostics: Diagnostics::default(),
            })
        }
        _ => Err(mismatch()),
    }
}

fn quantize_frame(x: &DdFrame, c: &Constellation) -> DdFrame {
    DdFrame::from_matrix(x.values().map(|v| c.quantize(v)))
}

fn rms(x: &CMat) -> f64 {
    let e = crate::linalg::energy(x);
    if e == 0.0 {
        1.0
    } else {
        (e / x.len() as f64).sqrt()
    }
}

/// One reservoir trained on `y_train -> x_train` and applied to `y_test`.
fn single_rc(
    cfg: &ReservoirConfig,
    y_train: &CMat,
    y_test: &CMat,
    x_train: &CMat,
    mask: Option<&DMatrix<bool>>,
    diag: &mut Diagnostics,
) -> Result<CMat> {
    let r = Reservoir::new(ReservoirConfig {
        input_dim: y_train.ncols(),
        ..cfg.clone()
    })?;
    let search = train_with_delay_search(&r, y_train, Some(y_test), x_train, mask)?;
    let z = predict(&search.s_test.s_bar, &search.weights)?;
    diag.losses.push(search.losses);
    diag.chosen_delays.push(search.weights.chosen_delay);
    diag.condition.push(search.weights.condition);
    diag.empty_columns += search.weights.empty_columns.len();
    Ok(z)
}

fn rc_equalize(spec: &EqualizerSpec, ds: &FrameDataset, c: &Constellation) -> Result<Equalized> {
    let cfg = spec.rc.as_ref().expect("validated");
    let (m, n) = ds.mask.omega().shape();
    // Per-frame gain normalization keeps the reservoir in the same operating
    // range whatever the received power.
    let gain = 1.0 / rms(&ds.y_test);
    let mut scaled = ds.clone();
    scaled.y_train *= Complex64::new(gain, 0.0);
    scaled.y_test *= Complex64::new(gain, 0.0);

    let mut diag = Diagnostics::default();
    let wide_pred = if spec.k_rc == 1 {
        let mask = match ds.scheme {
            PilotScheme::Interleaved => {
                let om = ds.mask.omega();
                Some(DMatrix::from_fn(m, n * ds.n_t, |l, j| om[(l, j % n)]))
            }
            PilotScheme::Superimposed => None,
        };
        single_rc(
            cfg,
            &widen(&scaled.y_train, ds.n_r)?,
            &widen(&scaled.y_test, ds.n_r)?,
            &widen(&ds.x_train, ds.n_t)?,
            mask.as_ref(),
            &mut diag,
        )?
    } else {
        let (part, subs) = partition_multi_rc(&scaled, spec.k_rc)?;
        let mut outs = Vec::with_capacity(subs.len());
        for sub in &subs {
            let sub_cfg = ReservoirConfig {
                seed: cfg.seed.wrapping_add(sub.group as u64),
                ..cfg.clone()
            };
            outs.push(single_rc(
                &sub_cfg,
                &sub.y_train,
                &sub.y_test,
                &sub.x_train,
                sub.mask.as_ref(),
                &mut diag,
            )?);
        }
        doppler_dft(&part.merge(&outs, ds.n_t)?, n, true)
    };

    let preds = unstack(&narrow(&wide_pred, ds.n_t)?, ds.n_t)?;
    let pilots = unstack(&ds.x_train, ds.n_t)?;
    let data_mask = ds.mask.omega().map(|b| !b);
    let detected = preds
        .iter()
        .zip(&pilots)
        .map(|(z, pilot)| {
            DdFrame::from_matrix(match ds.scheme {
                PilotScheme::Interleaved => detect(z, c, Some(&data_mask), None),
                PilotScheme::Superimposed => detect(z, c, None, Some(pilot)),
            })
        })
        .collect();
    Ok(Equalized {
        detected,
        diagnostics: diag,
    })
}

/// Reference receiver that skips equalization: each receive antenna's frame
/// is quantized as the estimate of the same-index transmit antenna, after the
/// same pilot handling the reservoir detector uses.
pub fn no_equalizer(ds: &FrameDataset, c: &Constellation) -> Result<Vec<DdFrame>> {
    if ds.n_r < ds.n_t {
        return Err(Error::Config(
            "the direct-quantization reference needs n_r >= n_t".into(),
        ));
    }
    let ys = unstack(&ds.y_test, ds.n_r)?;
    let pilots = unstack(&ds.x_train, ds.n_t)?;
    let data_mask = ds.mask.omega().map(|b| !b);
    Ok(pilots
        .iter()
        .zip(&ys)
        .map(|(pilot, y)| {
            DdFrame::from_matrix(match ds.scheme {
                PilotScheme::Interleaved => detect(y, c, Some(&data_mask), None),
                PilotScheme::Superimposed => detect(y, c, None, Some(pilot)),
            })
        })
        .collect())
}

/// Per-bin MMSE deconvolution of the delay-Doppler kernel with known CSI.
///
/// The kernel acts as a scaled 2D circular convolution, so in the 2D-DFT
/// domain `Y_f = H_f X_f` with `H_f = DFT2(h) / (MN)`. The soft estimate is
/// `conj(H_f) Y_f / (|H_f|^2 + noise_var)`, where `noise_var` is the noise
/// variance per cell divided by the symbol energy.
pub fn dd_mmse_perfect_csi(y: &DdFrame, h: &DdKernel, noise_var: f64) -> Result<DdFrame> {
    if y.m() != h.m() || y.n() != h.n() {
        return Err(dim_err(
            format!("{}x{}", h.m(), h.n()),
            format!("{}x{}", y.m(), y.n()),
        ));
    }
    if noise_var.is_nan() || noise_var < 0.0 {
        return Err(Error::Config(format!("noise variance {noise_var} is negative")));
    }
    let norm = 1.0 / (y.m() * y.n()) as f64;
    let hf = dft2(h.values()).map(|v| v * norm);
    let yf = dft2(y.values());
    let xf = CMat::from_fn(y.m(), y.n(), |i, j| {
        let hv = hf[(i, j)];
        let den = hv.norm_sqr() + noise_var;
        if den == 0.0 {
            ZERO
        } else {
            hv.conj() * yf[(i, j)] / den
        }
    });
    Ok(DdFrame::from_matrix(idft2(&xf)))
}

/// Least-squares channel estimates on the pilot cells of a time-frequency grid.
fn ls_estimates(y_tf: &CMat, pattern: &PilotPattern, amplitude: f64) -> Vec<(usize, usize, Complex64)> {
    pattern
        .pilot_cells()
        .into_iter()
        .map(|(r, k)| (r, k, y_tf[(r, k)] / amplitude))
        .collect()
}

/// Piecewise-linear interpolation of `(x, value)` samples sorted by `x`,
/// held constant beyond the end points.
fn interp(samples: &[(usize, Complex64)], x: usize) -> Complex64 {
    let first = samples[0];
    let last = samples[samples.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = samples.partition_point(|s| s.0 <= x);
    let (x0, v0) = samples[i - 1];
    let (x1, v1) = samples[i];
    let t = (x - x0) as f64 / (x1 - x0) as f64;
    v0 + (v1 - v0) * t
}

/// Channel estimate on the full time-frequency grid: least squares on the
/// pilot cells, linear interpolation along frequency inside each pilot symbol
/// and then along time across pilot symbols.
pub fn estimate_tf_channel(y_tf: &TfGrid, pattern: &PilotPattern, amplitude: f64) -> Result<CMat> {
    y_tf.check_shape(pattern.m(), pattern.n())?;
    let rows = pattern.pilot_rows();
    let cols = pattern.pilot_columns();
    if rows.len() < 2 || cols.len() < 2 {
        return Err(Error::TooFewPilots(format!(
            "interpolation needs pilots on at least 2 subcarriers and 2 symbols, got {} and {}",
            rows.len(),
            cols.len()
        )));
    }
    if amplitude.is_nan() || amplitude <= 0.0 {
        return Err(Error::Config(format!("pilot amplitude {amplitude} must be positive")));
    }
    let (m, n) = (pattern.m(), pattern.n());
    let est = ls_estimates(y_tf.values(), pattern, amplitude);
    // Frequency interpolation inside every pilot symbol.
    let per_symbol: Vec<(usize, Vec<Complex64>)> = cols
        .iter()
        .map(|&k| {
            let samples: Vec<(usize, Complex64)> = est
                .iter()
                .filter(|e| e.1 == k)
                .map(|e| (e.0, e.2))
                .collect();
            (k, (0..m).map(|r| interp(&samples, r)).collect())
        })
        .collect();
    Ok(CMat::from_fn(m, n, |r, k| {
        let samples: Vec<(usize, Complex64)> =
            per_symbol.iter().map(|(c, v)| (*c, v[r])).collect();
        interp(&samples, k)
    }))
}

/// Time-frequency LMMSE receiver with estimated CSI.
///
/// The frame carries pilots of amplitude `amplitude` on the pattern's
/// time-frequency cells and data elsewhere. The channel is estimated with
/// [`estimate_tf_channel`], every data cell is equalized with
/// `conj(H) Y / (|H|^2 + noise_var)` (noise relative to symbol energy), pilot
/// cells are zeroed, and the result is taken back to delay-Doppler.
pub fn tf_lmmse_estimated(
    y: &DdFrame,
    pattern: &PilotPattern,
    amplitude: f64,
    noise_var: f64,
) -> Result<DdFrame> {
    if noise_var.is_nan() || noise_var < 0.0 {
        return Err(Error::Config(format!("noise variance {noise_var} is negative")));
    }
    let y_tf = isfft(y);
    let h = estimate_tf_channel(&y_tf, pattern, amplitude)?;
    let yv = y_tf.values();
    let x_tf = CMat::from_fn(y.m(), y.n(), |r, k| {
        let hv = h[(r, k)];
        let den = hv.norm_sqr() + noise_var;
        if pattern.is_pilot(r, k) || den == 0.0 {
            ZERO
        } else {
            hv.conj() * yv[(r, k)] / den
        }
    });
    Ok(sfft(&TfGrid::from_matrix(x_tf)))
}

/// Bit error count, total and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerCount {
    pub errors: usize,
    pub total: usize,
    pub rate: f64,
}

pub fn ber(detected: &[u8], truth: &[u8]) -> Result<BerCount> {
    if detected.len() != truth.len() {
        return Err(Error::Length {
            expected: truth.len(),
            got: detected.len(),
        });
    }
    let errors = detected.iter().zip(truth).filter(|(a, b)| a != b).count();
    let total = truth.len();
    Ok(BerCount {
        errors,
        total,
        rate: if total == 0 { 0.0 } else { errors as f64 / total as f64 },
    })
}
