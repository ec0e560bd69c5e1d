//! OTFS link-level simulation with one-shot reservoir-computing equalization.
//!
//! The crate is organised bottom-up:
//!
//! * [`dd`] and [`constellation`]: delay-Doppler transforms, the time-domain
//!   modem and symbol mapping.
//! * [`channel`]: delay-Doppler kernels, tapped delay lines, AWGN and MIMO.
//! * [`pilots`]: pilot patterns, frame assembly and train/test extraction.
//! * [`esn`]: the echo-state reservoir and its closed-form readout.
//! * [`equalizers`]: per-frame equalization and classical baselines.
//! * [`harness`]: configuration, Monte-Carlo sweeps, CSV and SVG output.

pub mod channel;
pub mod constellation;
pub mod dd;
pub mod error;
pub mod equalizers;
pub mod esn;
pub mod harness;
pub mod linalg;
pub mod pilots;

pub use error::{Error, Result};
