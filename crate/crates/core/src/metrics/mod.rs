//! Signal, perception, and recognition-proxy evaluation metrics.

pub mod bss;
pub mod score;
pub mod stoi;
pub mod wer;

pub use bss::{bss_eval, BssEvalResult, DEFAULT_FILTER_LEN};
pub use score::{score_utterance, MetricKind, ScoreOptions, ScoreReport, UttScore};
pub use stoi::stoi;
pub use wer::{levenshtein, perm_wer, WerResult};

use thiserror::Error;

use crate::audio::Waveform;
use crate::scalar::Scalar;
use crate::DB_CAP;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("waveform lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference signal is zero (after mean removal where applicable)")]
    ZeroReference,
    #[error("estimate and reference counts differ: {0} vs {1}")]
    SourceCountMismatch(usize, usize),
    #[error("{sources} sources exceed the permutation-search limit of {limit}")]
    TooManySources { sources: usize, limit: usize },
    #[error("sample rate {fs} Hz is below the 10 kHz minimum for STOI")]
    SampleRateTooLow { fs: u32 },
    #[error("too few frames above the energy threshold: {kept} (need >= {need})")]
    TooShort { kept: usize, need: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// `10 log10(num/den)` clamped to the +-120 dB cap, with zero-energy edges
/// mapped to the caps.
pub(crate) fn db_ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        return -DB_CAP;
    }
    if den <= 0.0 {
        return DB_CAP;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CAP, DB_CAP)
}

fn mono_f64<T: Scalar>(w: &Waveform<T>) -> Vec<f64> {
    w.samples(0).iter().map(|v| v.to_f64_c()).collect()
}

/// Scale-invariant SNR in dB: project the zero-meaned estimate onto the
/// zero-meaned reference and compare target to residual energy. Capped to
/// +-120 dB.
pub fn si_snr<T: Scalar>(est: &Waveform<T>, reference: &Waveform<T>) -> Result<f64, MetricError> {
    if est.len() != reference.len() {
        return Err(MetricError::LengthMismatch(est.len(), reference.len()));
    }
    let e = mono_f64(est);
    let r = mono_f64(reference);
    let n = e.len() as f64;
    let em = e.iter().sum::<f64>() / n;
    let rm = r.iter().sum::<f64>() / n;

    let mut dot = 0.0;
    let mut r_energy = 0.0;
    for i in 0..e.len() {
        let e0 = e[i] - em;
        let r0 = r[i] - rm;
        dot += e0 * r0;
        r_energy += r0 * r0;
    }
    if r_energy <= 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let alpha = dot / r_energy;
    let mut target = 0.0;
    let mut resid = 0.0;
    for i in 0..e.len() {
        let e0 = e[i] - em;
        let s = alpha * (r[i] - rm);
        target += s * s;
        let d = e0 - s;
        resid += d * d;
    }
    Ok(db_ratio(target, resid))
}

/// Plain SNR in dB: reference energy over residual energy, no mean removal,
/// capped to +-120 dB. A 0/0 ratio reports 0 dB.
pub fn snr<T: Scalar>(est: &Waveform<T>, reference: &Waveform<T>) -> Result<f64, MetricError> {
    if est.len() != reference.len() {
        return Err(MetricError::LengthMismatch(est.len(), reference.len()));
    }
    let e = mono_f64(est);
    let r = mono_f64(reference);
    let num: f64 = r.iter().map(|v| v * v).sum();
    let den: f64 = e.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum();
    if num <= 0.0 && den <= 0.0 {
        return Ok(0.0);
    }
    Ok(db_ratio(num, den))
}
