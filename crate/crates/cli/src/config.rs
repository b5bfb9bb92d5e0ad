//! TOML pipeline configuration: stages, enhancement chain, simulator
//! geometry, and scoring knobs. Loading validates everything that can be
//! checked without touching data files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use sepkit::mask::MaskKind;
use sepkit::metrics::score::MetricKind;
use sepkit::stft::StftConfig;
use sepkit::wpe::WpeConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Simulate,
    Enhance,
    Score,
}

impl StageName {
    fn order(self) -> usize {
        match self {
            StageName::Simulate => 0,
            StageName::Enhance => 1,
            StageName::Score => 2,
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageName::Simulate => "simulate",
            StageName::Enhance => "enhance",
            StageName::Score => "score",
        })
    }
}

/// One enhancement step; masks carry the oracle mask family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ChainStep {
    Wpe,
    Mask(MaskKind),
    Mvdr,
    Mpdr,
    Wpd,
}

impl ChainStep {
    pub fn is_beamformer(self) -> bool {
        matches!(self, ChainStep::Mvdr | ChainStep::Mpdr | ChainStep::Wpd)
    }
}

impl FromStr for ChainStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wpe" => Ok(ChainStep::Wpe),
            "mvdr" => Ok(ChainStep::Mvdr),
            "mpdr" => Ok(ChainStep::Mpdr),
            "wpd" => Ok(ChainStep::Wpd),
            _ => match s.strip_prefix("mask:") {
                Some(kind) => kind.parse::<MaskKind>().map(ChainStep::Mask),
                None => Err(format!(
                    "unknown chain step {s:?} (expected wpe | mask:KIND | mvdr | mpdr | wpd)"
                )),
            },
        }
    }
}

impl fmt::Display for ChainStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainStep::Wpe => f.write_str("wpe"),
            ChainStep::Mask(kind) => write!(f, "mask:{kind}"),
            ChainStep::Mvdr => f.write_str("mvdr"),
            ChainStep::Mpdr => f.write_str("mpdr"),
            ChainStep::Wpd => f.write_str("wpd"),
        }
    }
}

impl TryFrom<String> for ChainStep {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ChainStep> for String {
    fn from(step: ChainStep) -> String {
        step.to_string()
    }
}

/// How additive noise is placed: `white` draws independent samples per
/// channel, `point` spatializes one dry noise source through its own RIR
/// (requires a room).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePlacement {
    White,
    Point,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    /// Input manifest for enhance/score; defaults to the simulate output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub size: [f64; 3],
    pub t60: f64,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    pub mics: Vec<[f64; 3]>,
}

fn default_max_order() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub utterances: usize,
    pub sources: usize,
    /// Seconds per utterance.
    pub duration: f64,
    pub sample_rate: u32,
    /// Power of source 0 over each other source, in dB.
    pub source_snr: f64,
    /// Speech-to-noise ratio in dB; omit for noiseless mixtures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_snr: Option<f64>,
    pub noise_kind: NoisePlacement,
    /// Utterance i is time-scaled by `speed_factors[i % len]`.
    pub speed_factors: Vec<f64>,
    /// Omit for anechoic single-channel mixtures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub room: Option<RoomConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            utterances: 10,
            sources: 1,
            duration: 2.0,
            sample_rate: 16_000,
            source_snr: 0.0,
            noise_snr: None,
            noise_kind: NoisePlacement::White,
            speed_factors: vec![1.0],
            room: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WpdConfig {
    pub taps: usize,
    pub delay: usize,
}

impl Default for WpdConfig {
    fn default() -> Self {
        WpdConfig { taps: 8, delay: 3 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnhanceConfig {
    pub ref_channel: usize,
    pub wpe: WpeConfig,
    pub wpd: WpdConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    /// Estimates manifest; defaults to the enhance output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimates: Option<PathBuf>,
    /// References manifest; defaults to `io.manifest`, then the simulate
    /// output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub references: Option<PathBuf>,
    /// Score the unprocessed mixture against the references instead of
    /// reading an estimates manifest.
    pub mixture_as_estimate: bool,
    pub trim: bool,
    pub bss_filter_len: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            estimates: None,
            references: None,
            mixture_as_estimate: false,
            trim: false,
            bss_filter_len: 512,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Stages the `run` subcommand executes, in pipeline order.
    #[serde(default)]
    pub stages: Vec<StageName>,
    #[serde(default)]
    pub enhance_chain: Vec<ChainStep>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    pub io: IoConfig,
    #[serde(default)]
    pub stft: StftConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub enhance: EnhanceConfig,
    #[serde(default)]
    pub score: ScoreConfig,
}

fn default_metrics() -> Vec<MetricKind> {
    MetricKind::ALL.to_vec()
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Structural checks that need no data files. Stage-specific
    /// requirements (nonempty chain for enhance) live in
    /// [`validate_for_stages`](Self::validate_for_stages).
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));

        if self.jobs == Some(0) {
            return bad("jobs must be >= 1".into());
        }
        for pair in self.stages.windows(2) {
            if pair[1].order() <= pair[0].order() {
                return bad(format!(
                    "stages must be an ordered subset of simulate, enhance, score; \
                     got {} before {}",
                    pair[0], pair[1]
                ));
            }
        }
        validate_chain_grammar(&self.enhance_chain)?;
        self.stft.check().map_err(|e| CliError::config(e.to_string()))?;

        let sim = &self.simulate;
        if sim.utterances == 0 {
            return bad("simulate.utterances must be >= 1".into());
        }
        if sim.sources == 0 {
            return bad("simulate.sources must be >= 1".into());
        }
        if sim.duration <= 0.0 || !sim.duration.is_finite() {
            return bad(format!("simulate.duration must be positive, got {}", sim.duration));
        }
        if sim.sample_rate == 0 {
            return bad("simulate.sample_rate must be positive".into());
        }
        if !sim.source_snr.is_finite() {
            return bad(format!("simulate.source_snr must be finite, got {}", sim.source_snr));
        }
        if let Some(snr) = sim.noise_snr {
            if !snr.is_finite() {
                return bad(format!("simulate.noise_snr must be finite, got {snr}"));
            }
        }
        if sim.speed_factors.is_empty() {
            return bad("simulate.speed_factors must not be empty".into());
        }
        for &f in &sim.speed_factors {
            if !(0.5..=2.0).contains(&f) {
                return bad(format!("speed factor {f} outside [0.5, 2.0]"));
            }
        }
        if let Some(room) = &sim.room {
            if room.mics.is_empty() {
                return bad("simulate.room.mics must not be empty".into());
            }
            if self.enhance.ref_channel >= room.mics.len() {
                return bad(format!(
                    "enhance.ref_channel {} out of range for {} mics",
                    self.enhance.ref_channel,
                    room.mics.len()
                ));
            }
        } else if sim.noise_kind == NoisePlacement::Point && sim.noise_snr.is_some() {
            return bad("noise_kind \"point\" requires simulate.room".into());
        }

        if self.metrics.is_empty() {
            return bad("metrics must not be empty".into());
        }
        if self.score.bss_filter_len == 0 {
            return bad("score.bss_filter_len must be >= 1".into());
        }
        Ok(())
    }

    /// Checks that only apply when particular stages are about to run.
    pub fn validate_for_stages(&self, stages: &[StageName]) -> Result<(), CliError> {
        if stages.contains(&StageName::Enhance) && self.enhance_chain.is_empty() {
            return Err(CliError::config(
                "enhance_chain must not be empty when the enhance stage runs",
            ));
        }
        Ok(())
    }

    /// Source mask family requested by the chain, if any.
    pub fn chain_mask_kind(&self) -> Option<MaskKind> {
        self.enhance_chain.iter().find_map(|s| match s {
            ChainStep::Mask(kind) => Some(*kind),
            _ => None,
        })
    }
}

/// Chains follow `wpe* (mask:KIND)? (mvdr|mpdr|wpd)?`: dereverberate first,
/// then estimate masks, then at most one beamformer consuming them.
fn validate_chain_grammar(chain: &[ChainStep]) -> Result<(), CliError> {
    let phase = |s: &ChainStep| match s {
        ChainStep::Wpe => 0,
        ChainStep::Mask(_) => 1,
        _ => 2,
    };
    for pair in chain.windows(2) {
        if phase(&pair[1]) < phase(&pair[0]) {
            return Err(CliError::config(format!(
                "chain step {} cannot follow {}",
                pair[1], pair[0]
            )));
        }
    }
    let masks = chain.iter().filter(|s| matches!(s, ChainStep::Mask(_))).count();
    if masks > 1 {
        return Err(CliError::config("chain may contain at most one mask step"));
    }
    let beamformers = chain.iter().filter(|s| s.is_beamformer()).count();
    if beamformers > 1 {
        return Err(CliError::config("chain may contain at most one beamformer step"));
    }
    if beamformers == 1 && masks == 0 {
        return Err(CliError::config(
            "beamformer steps need a preceding mask step to drive them",
        ));
    }
    Ok(())
}
