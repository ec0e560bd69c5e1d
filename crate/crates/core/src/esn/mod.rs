//! Echo-state reservoir with a closed-form linear readout.
//!
//! The reservoir steps along the delay axis of a frame: step `t` consumes the
//! received delay row `t` (one entry per Doppler bin and receive antenna),
//! buffered over the last `window_len` steps. Only the readout is learned.

mod multi_rc;
mod readout;

pub use multi_rc::{
    doppler_dft, narrow, partition_multi_rc, widen, MultiRcPartition, SubDataset,
};
pub use readout::{
    detect, fit_full, fit_masked, predict, relative_ridge, train_with_delay_search, DelaySearch,
    ReadoutWeights,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{CMat, ZERO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    /// Number of reservoir neurons.
    pub state_dim: usize,
    /// Width of one input vector before buffering.
    pub input_dim: usize,
    /// How many past input vectors are concatenated per step.
    pub window_len: usize,
    /// Target spectral radius of the state-to-state block, in `(0, 1)`.
    pub spectral_radius: f64,
    /// Input weights are drawn with standard deviation `input_scale / sqrt(fan_in)`.
    pub input_scale: f64,
    /// Ridge factor relative to the mean diagonal of `S^H S`.
    pub ridge: f64,
    /// Largest readout delay tried by the delay search.
    pub l_forget: usize,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            state_dim: 8,
            input_dim: 14,
            window_len: 20,
            spectral_radius: 0.9,
            input_scale: 0.5,
            ridge: 1e-4,
            l_forget: 2,
            seed: 0,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(Error::Config("state_dim must be at least 1".into()));
        }
        if self.input_dim == 0 || self.window_len == 0 {
            return Err(Error::Config("input_dim and window_len must be at least 1".into()));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            return Err(Error::Config(format!(
                "spectral_radius {} must lie in (0, 1)",
                self.spectral_radius
            )));
        }
        if !(self.input_scale.is_finite() && self.input_scale >= 0.0) {
            return Err(Error::Config("input_scale must be finite and non-negative".into()));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::Config("ridge must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Width of the buffered input `y_buf(t)`.
    pub fn buffered_dim(&self) -> usize {
        self.input_dim * self.window_len
    }
}

/// Fixed random recurrent network.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    cfg: ReservoirConfig,
    w_state: DMatrix<f64>,
    w_in: DMatrix<f64>,
}

/// Rows `[s(t); y_buf(t)]^T`, one per sequence step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedStateMatrix {
    pub s_bar: CMat,
    pub state_dim: usize,
}

impl ExtendedStateMatrix {
    pub fn rows(&self) -> usize {
        self.s_bar.nrows()
    }

    /// Rows `from..from+len`.
    pub fn slice(&self, from: usize, len: usize) -> ExtendedStateMatrix {
        ExtendedStateMatrix {
            s_bar: self.s_bar.rows(from, len).into_owned(),
            state_dim: self.state_dim,
        }
    }

    pub fn states(&self) -> CMat {
        self.s_bar.columns(0, self.state_dim).into_owned()
    }
}

/// Spectral radius of a real square matrix from its Schur form.
pub fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    w.complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

impl Reservoir {
    /// Dense Gaussian reservoir rescaled to the configured spectral radius.
    pub fn new(cfg: ReservoirConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = cfg.state_dim;
        let mut w_state =
            DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let rho = spectral_radius(&w_state);
        if rho > 0.0 {
            w_state *= cfg.spectral_radius / rho;
        }
        let fan_in = cfg.buffered_dim();
        let sd = cfg.input_scale / (fan_in as f64).sqrt();
        let w_in = DMatrix::from_fn(n, fan_in, |_, _| {
            sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        Ok(Self { cfg, w_state, w_in })
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.cfg
    }

    pub fn state_matrix(&self) -> &DMatrix<f64> {
        &self.w_state
    }

    /// `W_tran = [W_state | W_in]`, acting on `[s(t); y_buf(t)]`.
    pub fn w_tran(&self) -> DMatrix<f64> {
        let n = self.cfg.state_dim;
        let mut w = DMatrix::zeros(n, n + self.w_in.ncols());
        w.columns_mut(0, n).copy_from(&self.w_state);
        w.columns_mut(n, self.w_in.ncols()).copy_from(&self.w_in);
        w
    }

    /// Runs the reservoir from `s(0) = 0` over `inputs` (one row per step).
    pub fn run(&self, inputs: &CMat) -> Result<ExtendedStateMatrix> {
        self.run_from(inputs, &vec![ZERO; self.cfg.state_dim])
    }

    /// `s(t+1) = tanh(W_tran [s(t); y_buf(t)])` with tanh applied to real and
    /// imaginary parts separately.
    pub fn run_from(&self, inputs: &CMat, s0: &[Complex64]) -> Result<ExtendedStateMatrix> {
        let cfg = &self.cfg;
        if inputs.ncols() != cfg.input_dim {
            return Err(dim_err(
                format!("{} input columns", cfg.input_dim),
                inputs.ncols(),
            ));
        }
        if s0.len() != cfg.state_dim {
            return Err(dim_err(format!("state of length {}", cfg.state_dim), s0.len()));
        }
        let (steps, d, w) = (inputs.nrows(), cfg.input_dim, cfg.window_len);
        let n = cfg.state_dim;
        let mut s_bar = CMat::zeros(steps, n + d * w);
        let mut state = s0.to_vec();
        let mut buf = vec![ZERO; d * w];
        let mut next = vec![ZERO; n];
        for t in 0..steps {
            // Newest input first; older entries shift toward the tail.
            buf.copy_within(0..d * (w - 1), d);
            for j in 0..d {
                buf[j] = inputs[(t, j)];
            }
            for (j, v) in state.iter().enumerate() {
                s_bar[(t, j)] = *v;
            }
            for (j, v) in buf.iter().enumerate() {
                s_bar[(t, n + j)] = *v;
            }
            for (i, out) in next.iter_mut().enumerate() {
                let mut acc = ZERO;
                for (j, s) in state.iter().enumerate() {
                    acc += *s * self.w_state[(i, j)];
                }
                for (j, y) in buf.iter().enumerate() {
                    acc += *y * self.w_in[(i, j)];
                }
                *out = Complex64::new(acc.re.tanh(), acc.im.tanh());
            }
            std::mem::swap(&mut state, &mut next);
        }
        Ok(ExtendedStateMatrix { s_bar, state_dim: n })
    }
}
