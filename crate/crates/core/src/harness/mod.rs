//! Experiment configuration, Monte-Carlo sweeps and result output.

pub mod config;
pub mod output;
pub mod sweep;

pub use config::ExperimentConfig;
pub use output::{emit_plot, read_csv, write_csv};
pub use sweep::{run_sweep, run_sweep_with_stats, CellStats, ResultRecord};
