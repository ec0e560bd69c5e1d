//! Experiment configuration read from TOML.
//!
//! Deserialization errors carry the dotted key path of the offending field,
//! and semantic checks report the key they concern.

use serde::{Deserialize, Serialize};

use crate::channel::{spread_in_samples, Path, PathGenerator, PathList, PowerProfile, REFERENCE_DELAY_SPREAD_S};
use crate::constellation::{Constellation, ConstellationName};
use crate::dd::{FrameStructure, WaveformConfig};
use crate::equalizers::{EqualizerKind, EqualizerSpec};
use crate::error::{Error, Result};
use crate::esn::ReservoirConfig;
use crate::pilots::{PatternKind, PilotScheme};

fn key_err(path: &str, msg: impl Into<String>) -> Error {
    Error::ConfigKey {
        path: path.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_delta_f")]
    pub delta_f: f64,
    #[serde(default = "default_constellation")]
    pub constellation: ConstellationName,
    /// Defaults to the largest path delay.
    #[serde(default)]
    pub cp_len: Option<usize>,
    #[serde(default)]
    pub frame_structure: FrameStructure,
}

fn default_m() -> usize {
    64
}
fn default_n() -> usize {
    14
}
fn default_delta_f() -> f64 {
    15_000.0
}
fn default_constellation() -> ConstellationName {
    ConstellationName::Qpsk
}

impl Default for WaveformSection {
    fn default() -> Self {
        Self {
            m: default_m(),
            n: default_n(),
            delta_f: default_delta_f(),
            constellation: default_constellation(),
            cp_len: None,
            frame_structure: FrameStructure::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Delay-Doppler kernel applied directly to the frame.
    #[default]
    DdKernel,
    /// Time-domain tapped delay line between modulator and demodulator.
    Tdl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Absent: the 10 ns reference spread rounded to whole samples, which is
    /// zero at the default sample rates.
    #[serde(default)]
    pub delay_spread_samples: Option<usize>,
    /// Used when `sim.doppler_hz_list` is absent.
    #[serde(default = "default_doppler")]
    pub max_doppler_hz: f64,
    #[serde(default)]
    pub profile: PowerProfile,
}

fn default_n_paths() -> usize {
    6
}
fn default_doppler() -> f64 {
    555.0
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            delay_spread_samples: None,
            max_doppler_hz: default_doppler(),
            profile: PowerProfile::default(),
        }
    }
}

impl GeneratorSection {
    pub fn generator(&self, sample_rate: f64) -> PathGenerator {
        PathGenerator {
            n_paths: self.n_paths,
            delay_spread_samples: self
                .delay_spread_samples
                .unwrap_or_else(|| spread_in_samples(REFERENCE_DELAY_SPREAD_S, sample_rate)),
            profile: self.profile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimoSection {
    #[serde(default = "one")]
    pub n_t: usize,
    #[serde(default = "one")]
    pub n_r: usize,
}

fn one() -> usize {
    1
}

impl Default for MimoSection {
    fn default() -> Self {
        Self { n_t: 1, n_r: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default)]
    pub mode: ChannelMode,
    /// Fixed paths used on every link; their Dopplers are rescaled to each
    /// swept maximum Doppler. Mutually exclusive with `generator`.
    #[serde(default)]
    pub paths: Option<Vec<Path>>,
    #[serde(default)]
    pub generator: Option<GeneratorSection>,
    #[serde(default)]
    pub mimo: MimoSection,
}

/// Source of per-realization path lists.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Fixed(PathList),
    Random(PathGenerator),
}

impl ChannelSection {
    pub fn source(&self, sample_rate: f64) -> ChannelSource {
        match &self.paths {
            Some(paths) => {
                let max = paths.iter().map(|p| p.doppler_hz.abs()).fold(0.0, f64::max);
                ChannelSource::Fixed(PathList::new(paths.clone(), max))
            }
            None => ChannelSource::Random(self.generator.clone().unwrap_or_default().generator(sample_rate)),
        }
    }

    fn max_delay(&self, sample_rate: f64) -> usize {
        match self.source(sample_rate) {
            ChannelSource::Fixed(p) => p.max_delay(),
            ChannelSource::Random(g) => g.delays().into_iter().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSection {
    /// Informational; the scheme follows from the equalizer kind.
    #[serde(default)]
    pub scheme: Option<PilotScheme>,
    /// Absent: scattered for superimposed pilots, block_rows for interleaved
    /// pilots shared by several reservoirs, staircase otherwise.
    #[serde(default)]
    pub kind: Option<PatternKind>,
    #[serde(default = "default_overhead")]
    pub overhead: f64,
    #[serde(default = "default_power_fraction")]
    pub power_fraction: f64,
    #[serde(default = "default_pilot_seed")]
    pub pilot_seed: u64,
}

fn default_overhead() -> f64 {
    0.0469
}
fn default_power_fraction() -> f64 {
    0.5
}
fn default_pilot_seed() -> u64 {
    7
}

impl Default for PilotSection {
    fn default() -> Self {
        Self {
            scheme: None,
            kind: None,
            overhead: default_overhead(),
            power_fraction: default_power_fraction(),
            pilot_seed: default_pilot_seed(),
        }
    }
}

/// Reservoir keys; absent keys take the defaults of [`ReservoirConfig`],
/// except `state_dim` (8 SISO, 12 MIMO), `l_forget` (`cp_len`) and
/// `window_len` (see [`scaled_window`]).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcSection {
    pub state_dim: Option<usize>,
    pub window_len: Option<usize>,
    pub spectral_radius: Option<f64>,
    pub input_scale: Option<f64>,
    pub ridge: Option<f64>,
    pub l_forget: Option<usize>,
    pub seed: Option<u64>,
}

/// Default input window: 20 samples at m = 1024, kept at the same duration
/// in seconds for other grid sizes (2 samples at m = 64).
pub fn scaled_window(m: usize) -> usize {
    (20 * m).div_ceil(1024).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualizerSection {
    pub kind: EqualizerKind,
    #[serde(default = "one")]
    pub k_rc: usize,
    #[serde(default)]
    pub rc: RcSection,
    /// Per-equalizer overrides of the `[pilot]` keys.
    #[serde(default)]
    pub pilot_kind: Option<PatternKind>,
    #[serde(default)]
    pub overhead: Option<f64>,
    #[serde(default)]
    pub power_fraction: Option<f64>,
}

/// A single `[equalizer]` table or an `[[equalizer]]` array.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EqualizerList {
    One(EqualizerSection),
    Many(Vec<EqualizerSection>),
}

// Hand-written so errors inside a section keep their key path; the derived
// untagged form reports only "no variant matched".
impl<'de> Deserialize<'de> for EqualizerList {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::value::{MapAccessDeserializer, SeqAccessDeserializer};

        struct Visitor;
        impl<'de> serde::de::Visitor<'de> for Visitor {
            type Value = EqualizerList;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an equalizer table or an array of them")
            }
            fn visit_map<A: serde::de::MapAccess<'de>>(self, map: A) -> std::result::Result<Self::Value, A::Error> {
                EqualizerSection::deserialize(MapAccessDeserializer::new(map)).map(EqualizerList::One)
            }
            fn visit_seq<A: serde::de::SeqAccess<'de>>(self, seq: A) -> std::result::Result<Self::Value, A::Error> {
                Vec::deserialize(SeqAccessDeserializer::new(seq)).map(EqualizerList::Many)
            }
        }
        d.deserialize_any(Visitor)
    }
}

impl EqualizerList {
    pub fn as_slice(&self) -> &[EqualizerSection] {
        match self {
            EqualizerList::One(e) => std::slice::from_ref(e),
            EqualizerList::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub snr_db_list: Vec<f64>,
    #[serde(default)]
    pub doppler_hz_list: Option<Vec<f64>>,
    #[serde(default = "default_frames")]
    pub n_frames: usize,
    #[serde(default = "default_realizations")]
    pub n_channel_realizations: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
}

fn default_frames() -> usize {
    20
}
fn default_realizations() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub waveform: WaveformSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub pilot: PilotSection,
    pub equalizer: EqualizerList,
    pub sim: SimSection,
}

/// Pilot settings resolved for one equalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPilot {
    pub scheme: Option<PilotScheme>,
    pub kind: PatternKind,
    pub overhead: f64,
    pub power_fraction: f64,
    pub pilot_seed: u64,
}

/// One equalizer with everything needed to build its frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEqualizer {
    pub spec: EqualizerSpec,
    pub pilot: ResolvedPilot,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| key_err("<document>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            key_err(&path, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn sample_rate(&self) -> f64 {
        self.waveform.m as f64 * self.waveform.delta_f
    }

    pub fn cp_len(&self) -> usize {
        self.waveform
            .cp_len
            .unwrap_or_else(|| self.channel.max_delay(self.sample_rate()))
    }

    pub fn waveform(&self) -> Result<WaveformConfig> {
        WaveformConfig::new(
            self.waveform.m,
            self.waveform.n,
            self.waveform.delta_f,
            self.cp_len(),
            self.waveform.frame_structure,
        )
        .map_err(|e| key_err("waveform", e.to_string()))
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::new(self.waveform.constellation)
    }

    pub fn doppler_list(&self) -> Vec<f64> {
        match (&self.sim.doppler_hz_list, &self.channel.paths) {
            (Some(v), _) => v.clone(),
            (None, Some(paths)) => vec![paths.iter().map(|p| p.doppler_hz.abs()).fold(0.0, f64::max)],
            (None, None) => vec![self
                .channel
                .generator
                .as_ref()
                .map_or(default_doppler(), |g| g.max_doppler_hz)],
        }
    }

    pub fn equalizers(&self) -> Result<Vec<ResolvedEqualizer>> {
        let mimo = self.channel.mimo.n_t * self.channel.mimo.n_r > 1;
        self.equalizer
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let at = |key: &str| match &self.equalizer {
                    EqualizerList::One(_) => format!("equalizer.{key}"),
                    EqualizerList::Many(_) => format!("equalizer[{i}].{key}"),
                };
                let defaults = ReservoirConfig::default();
                let rc = ReservoirConfig {
                    state_dim: e.rc.state_dim.unwrap_or(if mimo { 12 } else { 8 }),
                    input_dim: self.waveform.n,
                    window_len: e.rc.window_len.unwrap_or_else(|| scaled_window(self.waveform.m)),
                    spectral_radius: e.rc.spectral_radius.unwrap_or(defaults.spectral_radius),
                    input_scale: e.rc.input_scale.unwrap_or(defaults.input_scale),
                    ridge: e.rc.ridge.unwrap_or(defaults.ridge),
                    l_forget: e.rc.l_forget.unwrap_or(self.cp_len()),
                    seed: e.rc.seed.unwrap_or(defaults.seed),
                };
                let spec = if e.kind.is_rc() {
                    EqualizerSpec::rc(e.kind, rc, e.k_rc).map_err(|err| key_err(&at("rc"), err.to_string()))?
                } else {
                    if e.k_rc != 1 {
                        return Err(key_err(&at("k_rc"), "baselines use k_rc = 1"));
                    }
                    if mimo {
                        return Err(key_err(&at("kind"), format!("{} supports a single antenna pair only", e.kind)));
                    }
                    EqualizerSpec::baseline(e.kind)?
                };
                if e.kind.is_rc() && spec.rc.as_ref().unwrap().l_forget >= self.waveform.m {
                    return Err(key_err(&at("rc.l_forget"), "must be smaller than m"));
                }
                if e.k_rc > self.waveform.n {
                    return Err(key_err(&at("k_rc"), format!("must not exceed n = {}", self.waveform.n)));
                }
                let pilot = ResolvedPilot {
                    scheme: e.kind.rc_scheme(),
                    kind: match e.kind {
                        EqualizerKind::TfLmmseEstimated => PatternKind::Lattice,
                        _ => e.pilot_kind.or(self.pilot.kind).unwrap_or(match e.kind {
                            EqualizerKind::RcSuperimposed => PatternKind::Scattered,
                            _ if e.k_rc > 1 => PatternKind::BlockRows,
                            _ => PatternKind::Staircase,
                        }),
                    },
                    overhead: e.overhead.unwrap_or(self.pilot.overhead),
                    power_fraction: e.power_fraction.unwrap_or(self.pilot.power_fraction),
                    pilot_seed: self.pilot.pilot_seed,
                };
                if !(pilot.overhead > 0.0 && pilot.overhead < 1.0) {
                    return Err(key_err(&at("overhead"), "must lie in (0, 1)"));
                }
                if !(pilot.power_fraction > 0.0 && pilot.power_fraction < 1.0) {
                    return Err(key_err(&at("power_fraction"), "must lie in (0, 1)"));
                }
                if e.kind == EqualizerKind::RcInterleaved && e.k_rc > 1 && pilot.kind != PatternKind::BlockRows {
                    return Err(key_err(
                        &at("pilot_kind"),
                        "several reservoirs with interleaved pilots need block_rows",
                    ));
                }
                Ok(ResolvedEqualizer { spec, pilot })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.waveform;
        if w.m < 2 {
            return Err(key_err("waveform.m", "must be at least 2"));
        }
        if w.n == 0 {
            return Err(key_err("waveform.n", "must be at least 1"));
        }
        if !(w.delta_f.is_finite() && w.delta_f > 0.0) {
            return Err(key_err("waveform.delta_f", "must be positive"));
        }
        if self.channel.paths.is_some() && self.channel.generator.is_some() {
            return Err(key_err("channel", "give either paths or generator, not both"));
        }
        if let Some(paths) = &self.channel.paths {
            if paths.is_empty() {
                return Err(key_err("channel.paths", "must not be empty"));
            }
        }
        if let Some(g) = &self.channel.generator {
            if g.n_paths == 0 {
                return Err(key_err("channel.generator.n_paths", "must be at least 1"));
            }
        }
        if self.channel.mimo.n_t == 0 {
            return Err(key_err("channel.mimo.n_t", "must be at least 1"));
        }
        if self.channel.mimo.n_r == 0 {
            return Err(key_err("channel.mimo.n_r", "must be at least 1"));
        }
        if self.cp_len() >= w.m {
            return Err(key_err("waveform.cp_len", format!("must be smaller than m = {}", w.m)));
        }
        if self.channel.max_delay(self.sample_rate()) > self.cp_len() {
            return Err(key_err(
                "waveform.cp_len",
                format!("path delay {} exceeds the cyclic prefix", self.channel.max_delay(self.sample_rate())),
            ));
        }
        if self.equalizer.as_slice().is_empty() {
            return Err(key_err("equalizer", "list must not be empty"));
        }
        let s = &self.sim;
        if s.snr_db_list.is_empty() {
            return Err(key_err("sim.snr_db_list", "must not be empty"));
        }
        if s.snr_db_list.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(key_err("sim.snr_db_list", "entries must be numbers or +inf"));
        }
        let dopplers = self.doppler_list();
        if dopplers.is_empty() {
            return Err(key_err("sim.doppler_hz_list", "must not be empty"));
        }
        if dopplers.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(key_err("sim.doppler_hz_list", "entries must be finite and non-negative"));
        }
        if s.n_frames == 0 {
            return Err(key_err("sim.n_frames", "must be at least 1"));
        }
        if s.n_channel_realizations == 0 {
            return Err(key_err("sim.n_channel_realizations", "must be at least 1"));
        }
        self.equalizers()?;
        Ok(())
    }
}
