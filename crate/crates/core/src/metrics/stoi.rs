//! Short-time objective intelligibility.
//!
//! Pinned recipe: resample both signals to 10 kHz, drop reference frames
//! more than 40 dB below the loudest frame, group FFT bins into 15
//! one-third-octave bands starting at 150 Hz, and average the per-band
//! correlation of 30-frame envelope segments after gain normalization and
//! a -15 dB clip on the estimate.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{mono_f64, MetricError};
use crate::audio::Waveform;
use crate::resample::resample_ratio;
use crate::scalar::Scalar;
use crate::stft::{window_values, Window};

const TARGET_FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const FFT_LEN: usize = 512;
const BANDS: usize = 15;
const LOWEST_CF_HZ: f64 = 150.0;
const SEGMENT: usize = 30;
const DYN_RANGE_DB: f64 = 40.0;
const CLIP_DB: f64 = -15.0;

/// Bin index ranges `[lo, hi)` of the one-third-octave bands on the
/// `FFT_LEN`-point grid at `TARGET_FS`.
fn band_edges() -> Vec<(usize, usize)> {
    let bin_hz = TARGET_FS as f64 / FFT_LEN as f64;
    let half_step = 2.0f64.powf(1.0 / 6.0);
    (0..BANDS)
        .map(|k| {
            let cf = LOWEST_CF_HZ * 2.0f64.powf(k as f64 / 3.0);
            let lo = (cf / half_step / bin_hz).ceil() as usize;
            let hi = (cf * half_step / bin_hz).ceil() as usize;
            (lo, hi.min(FFT_LEN / 2 + 1))
        })
        .collect()
}

/// Band envelope magnitudes, frames x bands.
fn band_envelope(frames: &[Vec<f64>], edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(FFT_LEN);
    frames
        .iter()
        .map(|frame| {
            let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
            for (b, v) in buf.iter_mut().zip(frame) {
                b.re = *v;
            }
            fft.process(&mut buf);
            edges
                .iter()
                .map(|&(lo, hi)| {
                    buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
                })
                .collect()
        })
        .collect()
}

fn windowed_frames(x: &[f64], window: &[f64]) -> Vec<Vec<f64>> {
    if x.len() < FRAME {
        return Vec::new();
    }
    (0..1 + (x.len() - FRAME) / HOP)
        .map(|t| {
            x[t * HOP..t * HOP + FRAME]
                .iter()
                .zip(window)
                .map(|(a, w)| a * w)
                .collect()
        })
        .collect()
}

pub fn stoi<T: Scalar>(est: &Waveform<T>, reference: &Waveform<T>) -> Result<f64, MetricError> {
    if est.len() != reference.len() {
        return Err(MetricError::LengthMismatch(est.len(), reference.len()));
    }
    if est.sample_rate != reference.sample_rate {
        return Err(MetricError::InvalidParameter(format!(
            "sample rates differ: {} vs {}",
            est.sample_rate, reference.sample_rate
        )));
    }
    let fs = reference.sample_rate;
    if fs < TARGET_FS {
        return Err(MetricError::SampleRateTooLow { fs });
    }
    let mut x = mono_f64(reference);
    let mut y = mono_f64(est);
    if fs != TARGET_FS {
        let ratio = TARGET_FS as f64 / fs as f64;
        x = resample_ratio(&x, ratio);
        y = resample_ratio(&y, ratio);
    }

    let window: Vec<f64> = window_values::<f64>(Window::Hann, FRAME).to_vec();
    let x_frames = windowed_frames(&x, &window);
    let y_frames = windowed_frames(&y, &window);

    // Silence gate driven by the reference alone.
    let energies_db: Vec<f64> = x_frames
        .iter()
        .map(|f| 20.0 * (f.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-300).log10())
        .collect();
    let max_db = energies_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = (0..x_frames.len())
        .filter(|&t| energies_db[t] > max_db - DYN_RANGE_DB)
        .collect();
    if kept.len() < SEGMENT {
        return Err(MetricError::TooShort { kept: kept.len(), need: SEGMENT });
    }
    let x_kept: Vec<Vec<f64>> = kept.iter().map(|&t| x_frames[t].clone()).collect();
    let y_kept: Vec<Vec<f64>> = kept.iter().map(|&t| y_frames[t].clone()).collect();

    let edges = band_edges();
    let xb = band_envelope(&x_kept, &edges);
    let yb = band_envelope(&y_kept, &edges);

    let clip_gain = 10.0f64.powf(CLIP_DB / 20.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for m in SEGMENT - 1..xb.len() {
        for j in 0..BANDS {
            let xs: Vec<f64> = (m + 1 - SEGMENT..=m).map(|t| xb[t][j]).collect();
            let ys: Vec<f64> = (m + 1 - SEGMENT..=m).map(|t| yb[t][j]).collect();
            let xx: f64 = xs.iter().map(|v| v * v).sum();
            let yy: f64 = ys.iter().map(|v| v * v).sum();
            let clipped: Vec<f64> = if yy > 0.0 {
                let alpha = (xx / yy).sqrt();
                ys.iter()
                    .zip(&xs)
                    .map(|(y, x)| (alpha * y).min(x * (1.0 + clip_gain)))
                    .collect()
            } else {
                vec![0.0; SEGMENT]
            };
            let xm = xs.iter().sum::<f64>() / SEGMENT as f64;
            let ym = clipped.iter().sum::<f64>() / SEGMENT as f64;
            let mut num = 0.0;
            let mut xv = 0.0;
            let mut yv = 0.0;
            for t in 0..SEGMENT {
                let a = xs[t] - xm;
                let b = clipped[t] - ym;
                num += a * b;
                xv += a * a;
                yv += b * b;
            }
            if xv <= 0.0 || yv <= 0.0 {
                continue;
            }
            sum += num / (xv.sqrt() * yv.sqrt());
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricError::ZeroReference);
    }
    Ok(sum / count as f64)
}
