//! Delay-Doppler / time-frequency transforms and the OTFS time-domain modem.
//!
//! Index convention, used everywhere in the crate: a [`DdFrame`] has `m` rows
//! indexed by delay `l` and `n` columns indexed by Doppler `k`; a [`TfGrid`]
//! has `m` rows indexed by subcarrier and `n` columns indexed by multicarrier
//! symbol. Nothing transposes these implicitly.
//!
//! All transforms are unitary: the ISFFT carries `1/sqrt(NM)` and the
//! per-symbol inverse DFT of the Heisenberg transform carries `1/sqrt(M)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{dft_columns, dft_rows, CMat, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStructure {
    /// One cyclic prefix for the whole frame.
    #[default]
    Standalone,
    /// OTFS on top of OFDM: one cyclic prefix per multicarrier symbol.
    Overlay,
}

/// Grid and sampling parameters of one OTFS frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f: f64,
    pub delta_t: f64,
    pub cp_len: usize,
    pub frame_structure: FrameStructure,
}

impl WaveformConfig {
    /// Critically sampled configuration (`delta_t = 1 / delta_f`).
    pub fn new(
        m: usize,
        n: usize,
        delta_f: f64,
        cp_len: usize,
        frame_structure: FrameStructure,
    ) -> Result<Self> {
        let cfg = Self {
            m,
            n,
            delta_f,
            delta_t: 1.0 / delta_f,
            cp_len,
            frame_structure,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("m and n must be at least 1".into()));
        }
        if !(self.delta_f.is_finite() && self.delta_f > 0.0) {
            return Err(Error::Config("delta_f must be positive".into()));
        }
        if (self.delta_t * self.delta_f - 1.0).abs() > 1e-9 {
            return Err(Error::Config("delta_t * delta_f must equal 1".into()));
        }
        if self.cp_len >= self.m {
            return Err(Error::Config(format!(
                "cp_len {} must be smaller than m {}",
                self.cp_len, self.m
            )));
        }
        Ok(())
    }

    /// Baseband sample rate `M * delta_f`.
    pub fn sample_rate(&self) -> f64 {
        self.m as f64 * self.delta_f
    }

    /// Number of samples produced by [`modulate`].
    pub fn frame_len(&self) -> usize {
        match self.frame_structure {
            FrameStructure::Standalone => self.cp_len + self.m * self.n,
            FrameStructure::Overlay => self.n * (self.cp_len + self.m),
        }
    }

    pub fn cells(&self) -> usize {
        self.m * self.n
    }
}

macro_rules! grid_type {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            values: CMat,
        }

        impl $name {
            pub fn zeros(m: usize, n: usize) -> Self {
                Self {
                    values: CMat::zeros(m, n),
                }
            }

            pub fn from_matrix(values: CMat) -> Self {
                Self { values }
            }

            pub fn from_fn(m: usize, n: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
                Self {
                    values: DMatrix::from_fn(m, n, f),
                }
            }

            pub fn m(&self) -> usize {
                self.values.nrows()
            }

            pub fn n(&self) -> usize {
                self.values.ncols()
            }

            pub fn values(&self) -> &CMat {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut CMat {
                &mut self.values
            }

            pub fn into_inner(self) -> CMat {
                self.values
            }

            pub fn energy(&self) -> f64 {
                crate::linalg::energy(&self.values)
            }

            pub fn check_shape(&self, m: usize, n: usize) -> Result<()> {
                if self.values.shape() != (m, n) {
                    return Err(dim_err(
                        format!("{}x{}", m, n),
                        format!("{}x{}", self.m(), self.n()),
                    ));
                }
                Ok(())
            }
        }
    };
}

grid_type!(DdFrame);
grid_type!(TfGrid);

impl std::ops::Index<(usize, usize)> for DdFrame {
    type Output = Complex64;
    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.values[idx]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DdFrame {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut Complex64 {
        &mut self.values[idx]
    }
}

/// ISFFT: `X[n,m] = 1/sqrt(NM) sum_k sum_l x[k,l] e^{j2pi(nk/N - ml/M)}`.
pub fn isfft(x: &DdFrame) -> TfGrid {
    let mut v = x.values.clone();
    dft_columns(&mut v, false);
    dft_rows(&mut v, true);
    TfGrid::from_matrix(v)
}

/// SFFT, the exact inverse of [`isfft`].
pub fn sfft(x: &TfGrid) -> DdFrame {
    let mut v = x.values.clone();
    dft_rows(&mut v, false);
    dft_columns(&mut v, true);
    DdFrame::from_matrix(v)
}

/// Shape-checked [`isfft`].
pub fn isfft_checked(x: &DdFrame, cfg: &WaveformConfig) -> Result<TfGrid> {
    x.check_shape(cfg.m, cfg.n)?;
    Ok(isfft(x))
}

/// Shape-checked [`sfft`].
pub fn sfft_checked(x: &TfGrid, cfg: &WaveformConfig) -> Result<DdFrame> {
    x.check_shape(cfg.m, cfg.n)?;
    Ok(sfft(x))
}

/// Heisenberg transform with rectangular pulses: per-symbol `M`-point inverse DFT.
pub fn heisenberg(x: &TfGrid) -> TfGrid {
    let mut v = x.values.clone();
    dft_columns(&mut v, true);
    TfGrid::from_matrix(v)
}

/// Wigner transform, inverse of [`heisenberg`].
pub fn wigner(x: &TfGrid) -> TfGrid {
    let mut v = x.values.clone();
    dft_columns(&mut v, false);
    TfGrid::from_matrix(v)
}

/// Frame time samples at rate `M * delta_f`.
///
/// The standalone path skips the explicit ISFFT: the ISFFT's delay-axis DFT
/// cancels against the per-symbol inverse DFT, leaving one `N`-point inverse
/// DFT along the Doppler axis, `s[n'M + l] = 1/sqrt(N) sum_k x[k,l] e^{j2pi kn'/N}`.
/// The overlay path runs the full ISFFT + OFDM chain.
pub fn modulate(x: &DdFrame, cfg: &WaveformConfig) -> Result<Vec<Complex64>> {
    x.check_shape(cfg.m, cfg.n)?;
    let (m, n, cp) = (cfg.m, cfg.n, cfg.cp_len);
    let mut out = Vec::with_capacity(cfg.frame_len());
    match cfg.frame_structure {
        FrameStructure::Standalone => {
            let mut core = x.values.clone();
            dft_rows(&mut core, true);
            let core = core.as_slice();
            out.extend_from_slice(&core[m * n - cp..]);
            out.extend_from_slice(core);
        }
        FrameStructure::Overlay => {
            let tf = heisenberg(&isfft(x));
            for col in tf.values.as_slice().chunks_exact(m) {
                out.extend_from_slice(&col[m - cp..]);
                out.extend_from_slice(col);
            }
        }
    }
    Ok(out)
}

/// Strips the cyclic prefix(es) and returns the CP-free core, column by column.
pub fn strip_cp(samples: &[Complex64], cfg: &WaveformConfig) -> Result<CMat> {
    if samples.len() != cfg.frame_len() {
        return Err(Error::Length {
            expected: cfg.frame_len(),
            got: samples.len(),
        });
    }
    let (m, n, cp) = (cfg.m, cfg.n, cfg.cp_len);
    let core: Vec<Complex64> = match cfg.frame_structure {
        FrameStructure::Standalone => samples[cp..].to_vec(),
        FrameStructure::Overlay => samples
            .chunks_exact(cp + m)
            .flat_map(|sym| sym[cp..].iter().copied())
            .collect(),
    };
    Ok(CMat::from_column_slice(m, n, &core))
}

/// Receiver filter bank followed by the SFFT; inverse of [`modulate`].
pub fn demodulate(samples: &[Complex64], cfg: &WaveformConfig) -> Result<DdFrame> {
    let mut core = strip_cp(samples, cfg)?;
    match cfg.frame_structure {
        FrameStructure::Standalone => {
            dft_rows(&mut core, false);
            Ok(DdFrame::from_matrix(core))
        }
        FrameStructure::Overlay => {
            let tf = wigner(&TfGrid::from_matrix(core));
            Ok(sfft(&tf))
        }
    }
}

/// Elementwise product with a 0/1 mask.
pub fn apply_mask(x: &CMat, mask: &DMatrix<bool>, keep: bool) -> CMat {
    assert_eq!(x.shape(), mask.shape(), "mask shape");
    CMat::from_fn(x.nrows(), x.ncols(), |r, c| {
        if mask[(r, c)] == keep {
            x[(r, c)]
        } else {
            ZERO
        }
    })
}
