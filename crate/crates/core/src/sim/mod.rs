//! Synthetic corpus generation: image-method room impulse responses,
//! SNR-controlled mixing, speed perturbation, and seeded noise sources.

pub mod mix;
pub mod noise;
pub mod rir;

pub use mix::{convolve, mix_at_snr, speed_perturb, MixOutput};
pub use noise::{gen_noise, gen_speech_like, NoiseKind};
pub use rir::{generate_rir, RirSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of sound in m/s used for all propagation delays.
pub const SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("Sabine absorption {alpha:.3} exceeds 1: the room cannot decay to t60 = {t60} s")]
    RoomTooSmall { alpha: f64, t60: f64 },
    #[error("zero-power {0} input")]
    ZeroPower(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("speed factor {0} outside [0.5, 2.0]")]
    FactorOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Mixing recipe for one utterance, recorded in the corpus sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// Speech-to-noise ratio in dB.
    pub snr: f64,
    pub seed: u64,
    /// Number of speech sources in the mixture.
    pub sources: usize,
}
