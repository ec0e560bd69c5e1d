//! Seeded Monte-Carlo sweep over SNR, Doppler, channel realizations and frames.
//!
//! Every random draw comes from a ChaCha stream keyed by the master seed and
//! the indices of what it feeds: channels by (Doppler, realization), payload
//! bits by (Doppler, realization, frame) and noise additionally by SNR. All
//! equalizers and SNR points therefore see the same channels and payloads.
//! Frames run in parallel and are reduced in task order, so results do not
//! depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ChannelMode, ChannelSource, ExperimentConfig, ResolvedEqualizer};
use crate::channel::{
    add_noise, apply_mimo_kernel, apply_mimo_tdl, kernel_from_paths, noise_variance, DdKernel,
    MimoConfig, PathList,
};
use crate::constellation::Constellation;
use crate::dd::{demodulate, modulate, DdFrame, WaveformConfig};
use crate::equalizers::{equalize_frame, no_equalizer, EqualizerKind, FrameInput};
use crate::error::{Error, Result};
use crate::pilots::{
    build_interleaved, build_superimposed_with_amplitude, make_pattern, nominal_amplitude,
    overhead, rx_parts, stack_mimo, PilotPattern, PilotScheme, TxParts,
};

/// One row of the results table: a (equalizer, SNR, Doppler) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scheme: String,
    pub equalizer: String,
    pub snr_db: f64,
    pub doppler_hz: f64,
    pub k_rc: usize,
    /// Delay-Doppler pilot fraction for interleaved pilots, pilot power
    /// fraction for superimposed pilots, time-frequency pilot fraction for
    /// the estimated-CSI baseline and 0 for the perfect-CSI baseline.
    pub overhead: f64,
    pub n_t: usize,
    pub n_r: usize,
    pub n_frames: usize,
    pub n_bits: u64,
    pub n_errors: u64,
    pub ber: f64,
    pub mean_train_loss: Option<f64>,
    pub seed: u64,
}

/// A result record with the per-realization spread behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub record: ResultRecord,
    /// Bit error rate of each channel realization.
    pub realization_ber: Vec<f64>,
    /// BER of quantizing the received frame directly on the same frames
    /// (reservoir equalizers with `n_r >= n_t` only).
    pub reference_ber: Option<f64>,
}

impl CellStats {
    /// Standard error of the mean over channel realizations.
    pub fn std_error(&self) -> f64 {
        let k = self.realization_ber.len();
        if k < 2 {
            return 0.0;
        }
        let mean = self.realization_ber.iter().sum::<f64>() / k as f64;
        let var = self
            .realization_ber
            .iter()
            .map(|b| (b - mean).powi(2))
            .sum::<f64>()
            / (k - 1) as f64;
        (var / k as f64).sqrt()
    }
}

const TAG_CHANNEL: u64 = 1;
const TAG_DATA: u64 = 2;
const TAG_NOISE: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `tag` and an index tuple under `master`.
pub fn task_rng(master: u64, tag: u64, idx: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(master ^ splitmix(tag)));
    let stream = idx.iter().fold(splitmix(tag), |acc, &i| splitmix(acc ^ i));
    rng.set_stream(stream);
    rng
}

struct Prepared {
    eq: ResolvedEqualizer,
    pattern: Option<PilotPattern>,
    scheme_label: String,
    overhead: f64,
    /// Pilot amplitude for the superimposed and time-frequency pilot frames.
    amplitude: f64,
}

struct Context {
    wf: WaveformConfig,
    c: Constellation,
    mode: ChannelMode,
    source: ChannelSource,
    n_t: usize,
    n_r: usize,
    master: u64,
    snrs: Vec<f64>,
    dopplers: Vec<f64>,
    frames: usize,
    realizations: usize,
    eqs: Vec<Prepared>,
}

#[derive(Debug, Clone, Copy)]
struct Task {
    eq: usize,
    dop: usize,
    snr: usize,
    real: usize,
    frame: usize,
}

#[derive(Debug, Clone, Copy)]
struct FrameOutcome {
    errors: u64,
    bits: u64,
    train_loss: Option<f64>,
    ref_errors: Option<u64>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Context> {
    let wf = cfg.waveform()?;
    let c = cfg.constellation();
    let es = c.mean_energy();
    let eqs = cfg
        .equalizers()?
        .into_iter()
        .map(|eq| {
            let p = &eq.pilot;
            let (pattern, label, oh, amplitude) = match eq.spec.kind {
                EqualizerKind::RcInterleaved | EqualizerKind::RcSuperimposed => {
                    let pat = make_pattern(p.kind, wf.m, wf.n, p.overhead, p.pilot_seed)?;
                    let scheme = eq.spec.kind.rc_scheme().expect("rc kind");
                    let (oh, amp) = match scheme {
                        PilotScheme::Interleaved => (overhead(&pat), 0.0),
                        PilotScheme::Superimposed => (
                            p.power_fraction,
                            nominal_amplitude(&pat, p.power_fraction, es),
                        ),
                    };
                    (Some(pat), scheme.to_string(), oh, amp)
                }
                EqualizerKind::TfLmmseEstimated => {
                    let pat = make_pattern(p.kind, wf.m, wf.n, p.overhead, p.pilot_seed)?;
                    let oh = overhead(&pat);
                    (Some(pat), "tf_lattice".to_string(), oh, es.sqrt())
                }
                EqualizerKind::DdMmsePerfectCsi => (None, "none".to_string(), 0.0, 0.0),
            };
            Ok(Prepared {
                eq,
                pattern,
                scheme_label: label,
                overhead: oh,
                amplitude,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Context {
        wf,
        c,
        mode: cfg.channel.mode,
        source: cfg.channel.source(cfg.sample_rate()),
        n_t: cfg.channel.mimo.n_t,
        n_r: cfg.channel.mimo.n_r,
        master: cfg.sim.master_seed,
        snrs: cfg.sim.snr_db_list.clone(),
        dopplers: cfg.doppler_list(),
        frames: cfg.sim.n_frames,
        realizations: cfg.sim.n_channel_realizations,
        eqs,
    })
}

impl Context {
    fn channel(&self, dop: usize, real: usize) -> Result<MimoConfig<PathList>> {
        let nu = self.dopplers[dop];
        let links = self.n_t * self.n_r;
        let paths = match &self.source {
            ChannelSource::Fixed(p) => vec![p.with_max_doppler(nu); links],
            ChannelSource::Random(g) => {
                let mut rng = task_rng(self.master, TAG_CHANNEL, &[dop as u64, real as u64]);
                (0..links).map(|_| g.draw(nu, &mut rng)).collect()
            }
        };
        for p in &paths {
            p.validate(&self.wf)?;
        }
        MimoConfig::new(self.n_t, self.n_r, paths)
    }

    fn payload(&self, t: &Task) -> Vec<Vec<u8>> {
        let mut rng = task_rng(
            self.master,
            TAG_DATA,
            &[t.dop as u64, t.real as u64, t.frame as u64],
        );
        let len = self.wf.cells() * self.c.bits_per_symbol();
        (0..self.n_t)
            .map(|_| (0..len).map(|_| rng.random_range(0..2u8)).collect())
            .collect()
    }

    fn transmit(
        &self,
        x: &[DdFrame],
        paths: &MimoConfig<PathList>,
        kernels: &MimoConfig<DdKernel>,
        t: &Task,
    ) -> Result<(Vec<DdFrame>, f64)> {
        let mut rng = task_rng(
            self.master,
            TAG_NOISE,
            &[t.snr as u64, t.dop as u64, t.real as u64, t.frame as u64],
        );
        let snr = self.snrs[t.snr];
        match self.mode {
            ChannelMode::DdKernel => {
                // The modem is unitary, so white noise of variance s2 per time
                // sample is white noise of variance s2 per delay-Doppler cell.
                let clean = apply_mimo_kernel(x, kernels)?;
                let all: Vec<_> = clean.iter().flat_map(|y| y.values().iter().copied()).collect();
                let var = noise_variance(&all, snr)?;
                let noisy = clean
                    .iter()
                    .map(|y| {
                        let v = add_noise(y.values().as_slice(), var, &mut rng);
                        DdFrame::from_matrix(crate::linalg::CMat::from_vec(y.m(), y.n(), v))
                    })
                    .collect();
                Ok((noisy, var))
            }
            ChannelMode::Tdl => {
                let tx = x
                    .iter()
                    .map(|f| modulate(f, &self.wf))
                    .collect::<Result<Vec<_>>>()?;
                let t0 = -(self.wf.cp_len as f64) / self.wf.sample_rate();
                let rx = apply_mimo_tdl(&tx, paths, t0, self.wf.sample_rate())?;
                let all: Vec<_> = rx.iter().flatten().copied().collect();
                let var = noise_variance(&all, snr)?;
                let frames = rx
                    .iter()
                    .map(|r| demodulate(&add_noise(r, var, &mut rng), &self.wf))
                    .collect::<Result<Vec<_>>>()?;
                Ok((frames, var))
            }
        }
    }

    fn run_frame(&self, t: &Task) -> Result<FrameOutcome> {
        let prep = &self.eqs[t.eq];
        let spec = &prep.eq.spec;
        let c = &self.c;
        let bps = c.bits_per_symbol();
        let paths = self.channel(t.dop, t.real)?;
        let kernels = paths.try_map(|p| kernel_from_paths(p, &self.wf))?;
        let payload = self.payload(t);
        let (m, n) = (self.wf.m, self.wf.n);
        let full = DdFrame::zeros(m, n);

        // Frames and the bits that end up on data cells, per transmit antenna.
        let mut frames = Vec::with_capacity(self.n_t);
        let mut known = Vec::with_capacity(self.n_t);
        let mut sent_bits = Vec::with_capacity(self.n_t);
        for (tx, bits) in payload.iter().enumerate() {
            match spec.kind {
                EqualizerKind::RcInterleaved => {
                    let p = prep.pattern.as_ref().expect("pattern");
                    let b = &bits[..p.data_cells().len() * bps];
                    let seed = prep.eq.pilot.pilot_seed.wrapping_add(tx as u64);
                    let (frame, parts) = build_interleaved(b, p, c, seed)?;
                    frames.push(frame);
                    known.push(parts);
                    sent_bits.push(b.to_vec());
                }
                EqualizerKind::RcSuperimposed | EqualizerKind::TfLmmseEstimated => {
                    let p = prep.pattern.as_ref().expect("pattern");
                    let x = DdFrame::from_matrix(crate::linalg::CMat::from_vec(
                        m,
                        n,
                        c.map_bits(bits)?,
                    ));
                    let f = build_superimposed_with_amplitude(&x, p, prep.amplitude)?;
                    frames.push(f.frame);
                    known.push(f.parts);
                    sent_bits.push(bits.clone());
                }
                EqualizerKind::DdMmsePerfectCsi => {
                    let x = crate::linalg::CMat::from_vec(m, n, c.map_bits(bits)?);
                    frames.push(DdFrame::from_matrix(x.clone()));
                    known.push(TxParts {
                        x_train: full.values().clone(),
                        x_test: x,
                    });
                    sent_bits.push(bits.clone());
                }
            }
        }

        let (rx, var) = self.transmit(&frames, &paths, &kernels, t)?;
        let noise_rel = var / c.mean_energy();

        let mut ref_detected = None;
        let eq = match spec.kind {
            EqualizerKind::RcInterleaved | EqualizerKind::RcSuperimposed => {
                let p = prep.pattern.as_ref().expect("pattern");
                let scheme = spec.kind.rc_scheme().expect("rc kind");
                let parts = rx
                    .iter()
                    .map(|y| rx_parts(y, scheme, p))
                    .collect::<Result<Vec<_>>>()?;
                let ds = stack_mimo(&known, &parts, scheme, p)?;
                if self.n_r >= self.n_t {
                    ref_detected = Some(no_equalizer(&ds, c)?);
                }
                equalize_frame(spec, FrameInput::Dataset(&ds), c)?
            }
            EqualizerKind::DdMmsePerfectCsi => equalize_frame(
                spec,
                FrameInput::PerfectCsi {
                    y: &rx[0],
                    h: kernels.link(0, 0),
                    noise_var: noise_rel,
                },
                c,
            )?,
            EqualizerKind::TfLmmseEstimated => equalize_frame(
                spec,
                FrameInput::TfPilots {
                    y: &rx[0],
                    pattern: prep.pattern.as_ref().expect("pattern"),
                    amplitude: prep.amplitude,
                    noise_var: noise_rel,
                },
                c,
            )?,
        };

        let data_cells: Vec<(usize, usize)> = match spec.kind {
            EqualizerKind::RcInterleaved => prep.pattern.as_ref().expect("pattern").data_cells(),
            _ => (0..n).flat_map(|k| (0..m).map(move |l| (l, k))).collect(),
        };
        let count_errors = |detected: &[DdFrame]| -> u64 {
            detected
                .iter()
                .zip(&sent_bits)
                .map(|(d, truth)| {
                    let syms: Vec<_> = data_cells.iter().map(|&cell| d[cell]).collect();
                    let bits = c.demap_all(&syms);
                    bits.iter().zip(truth).filter(|(a, b)| a != b).count() as u64
                })
                .sum()
        };
        let bits = sent_bits.iter().map(|b| b.len() as u64).sum();
        Ok(FrameOutcome {
            errors: count_errors(&eq.detected),
            bits,
            train_loss: eq.diagnostics.mean_train_loss(),
            ref_errors: ref_detected.as_deref().map(count_errors),
        })
    }

    fn tasks(&self) -> Vec<Task> {
        let mut out = Vec::new();
        for eq in 0..self.eqs.len() {
            for dop in 0..self.dopplers.len() {
                for snr in 0..self.snrs.len() {
                    for real in 0..self.realizations {
                        for frame in 0..self.frames {
                            out.push(Task {
                                eq,
                                dop,
                                snr,
                                real,
                                frame,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs the sweep and returns the result table.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    Ok(run_sweep_with_stats(cfg)?
        .into_iter()
        .map(|s| s.record)
        .collect())
}

/// Runs the sweep and keeps per-realization statistics for every cell.
pub fn run_sweep_with_stats(cfg: &ExperimentConfig) -> Result<Vec<CellStats>> {
    cfg.validate()?;
    let ctx = prepare(cfg)?;
    let tasks = ctx.tasks();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sim.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<FrameOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| ctx.run_frame(t))
            .collect::<Result<Vec<_>>>()
    })?;

    let per_cell = ctx.realizations * ctx.frames;
    let mut cells = Vec::new();
    for (chunk, first) in outcomes.chunks(per_cell).zip(tasks.iter().step_by(per_cell)) {
        let prep = &ctx.eqs[first.eq];
        let errors: u64 = chunk.iter().map(|o| o.errors).sum();
        let bits: u64 = chunk.iter().map(|o| o.bits).sum();
        let realization_ber = chunk
            .chunks(ctx.frames)
            .map(|r| {
                let e: u64 = r.iter().map(|o| o.errors).sum();
                let b: u64 = r.iter().map(|o| o.bits).sum();
                e as f64 / b as f64
            })
            .collect();
        let losses: Vec<f64> = chunk.iter().filter_map(|o| o.train_loss).collect();
        let mean_train_loss =
            (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
        let reference_ber = chunk
            .iter()
            .map(|o| o.ref_errors)
            .sum::<Option<u64>>()
            .map(|e| e as f64 / bits as f64);
        cells.push(CellStats {
            record: ResultRecord {
                scheme: prep.scheme_label.clone(),
                equalizer: prep.eq.spec.kind.to_string(),
                snr_db: ctx.snrs[first.snr],
                doppler_hz: ctx.dopplers[first.dop],
                k_rc: prep.eq.spec.k_rc,
                overhead: prep.overhead,
                n_t: ctx.n_t,
                n_r: ctx.n_r,
                n_frames: per_cell,
                n_bits: bits,
                n_errors: errors,
                ber: errors as f64 / bits as f64,
                mean_train_loss,
                seed: ctx.master,
            },
            realization_ber,
            reference_ber,
        });
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_streams_are_distinct_and_repeatable() {
        let draw = |tag, idx: &[u64]| task_rng(5, tag, idx).random::<u64>();
        assert_eq!(draw(1, &[0, 1]), draw(1, &[0, 1]));
        assert_ne!(draw(1, &[0, 1]), draw(1, &[1, 0]));
        assert_ne!(draw(1, &[0, 1]), draw(2, &[0, 1]));
        assert_ne!(task_rng(5, 1, &[0]).random::<u64>(), task_rng(6, 1, &[0]).random::<u64>());
    }

    #[test]
    fn identity_channel_sweep_is_error_free() {
        let text = r#"
            [waveform]
            m = 16
            n = 4
            [channel]
            paths = [{ delay_samples = 0, doppler_hz = 0.0, gain = [1.0, 0.0] }]
            [pilot]
            overhead = 0.5
            kind = "block_rows"
            [[equalizer]]
            kind = "dd_mmse_perfect_csi"
            [[equalizer]]
            kind = "tf_lmmse_estimated"
            overhead = 0.0625
            [[equalizer]]
            kind = "rc_interleaved"
            rc = { window_len = 1, state_dim = 2 }
            [sim]
            snr_db_list = [inf]
            n_frames = 1
            n_channel_realizations = 2
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let recs = run_sweep(&cfg).unwrap();
        assert_eq!(recs.len(), 3);
        for r in &recs {
            assert_eq!(r.n_errors, 0, "{r:?}");
            assert_eq!(r.ber, 0.0);
            assert_eq!(r.n_frames, 2);
        }
        assert_eq!(recs[0].n_bits, 2 * 16 * 4 * 2);
        assert_eq!(recs[2].n_bits, 2 * 8 * 4 * 2);
        assert!(recs[2].mean_train_loss.is_some());
        assert!(recs[0].mean_train_loss.is_none());
    }
}
