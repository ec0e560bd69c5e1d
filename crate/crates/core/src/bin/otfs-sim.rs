//! Command-line front end for running BER sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use otfs_core::harness::{emit_plot, run_sweep, write_csv, ExperimentConfig};

#[derive(Parser)]
#[command(name = "otfs-sim", version, about = "OTFS link-level BER simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config file.
    Run {
        config: PathBuf,
        /// CSV output path (default: results.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional SVG plot of BER against SNR.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Overrides sim.master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides sim.workers (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Prefixes an error with the file it concerns.
fn at(path: &Path) -> impl Fn(otfs_core::Error) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run {
            config,
            out,
            plot,
            seed,
            workers,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config).map_err(at(&config))?;
            if let Some(s) = seed {
                cfg.sim.master_seed = s;
            }
            if let Some(w) = workers {
                cfg.sim.workers = w;
            }
            let started = std::time::Instant::now();
            let records = run_sweep(&cfg).map_err(|e| e.to_string())?;
            let out = out.unwrap_or_else(|| PathBuf::from("results.csv"));
            write_csv(&records, &out).map_err(at(&out))?;
            if let Some(p) = plot {
                emit_plot(&records, &p).map_err(at(&p))?;
            }
            for r in &records {
                println!(
                    "{:<20} {:<13} K={:<2} snr={:>5} dB  doppler={:>6} Hz  ber={:.3e}",
                    r.equalizer, r.scheme, r.k_rc, r.snr_db, r.doppler_hz, r.ber
                );
            }
            log::info!("finished in {:.1} s", started.elapsed().as_secs_f64());
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
