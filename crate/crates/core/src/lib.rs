// The DSP kernels index several arrays per loop with subscript arithmetic;
// iterator rewrites obscure the math.
#![allow(clippy::needless_range_loop)]

//! Multichannel speech enhancement and separation toolkit.
//!
//! The crate provides the signal-processing core of a batch
//! enhancement/separation pipeline:
//!
//! * [`audio`] — WAV I/O and utterance manifests
//! * [`stft`] — short-time Fourier analysis/synthesis with
//!   perfect-reconstruction guarantees
//! * [`mask`] — oracle time-frequency masks (IBM/IRM/IAM/PSM)
//! * [`beamform`] — mask-driven spatial covariance estimation and
//!   MVDR/MPDR/WPD beamformers
//! * [`wpe`] — weighted-prediction-error dereverberation
//! * [`objective`] — scalar training-style objectives with permutation- and
//!   mixture-invariant resolution
//! * [`metrics`] — SNR/SI-SNR, BSS-eval (SDR/SIR/SAR), STOI and
//!   permutation-minimized WER, plus utterance scoring and reports
//! * [`resample`] — the windowed-sinc polyphase resampler shared by STOI and
//!   speed perturbation
//! * [`sim`] — synthetic corpus generation: image-method room impulse
//!   responses, SNR-controlled mixing, seeded noise
//!
//! All numeric kernels are generic over the sample type via
//! [`Scalar`](scalar::Scalar); `f32` and `f64` are supported. The `*32`/`*64`
//! aliases below pick a concrete scalar.

pub mod audio;
pub mod beamform;
pub(crate) mod linalg;
pub mod mask;
pub mod metrics;
pub mod objective;
pub mod resample;
pub mod scalar;
pub mod sim;
pub mod stft;
pub mod wpe;

pub use scalar::Scalar;

pub type Waveform32 = audio::Waveform<f32>;
pub type Waveform64 = audio::Waveform<f64>;
pub type Spectrogram32 = stft::ComplexSpectrogram<f32>;
pub type Spectrogram64 = stft::ComplexSpectrogram<f64>;
pub type Mask32 = mask::TimeFreqMask<f32>;
pub type Mask64 = mask::TimeFreqMask<f64>;

/// Log-ratio metrics are clamped to this magnitude (dB) so that perfect
/// reconstructions stay finite; report serialization renders clamped values
/// as "inf"/"-inf".
pub const DB_CAP: f64 = 120.0;
