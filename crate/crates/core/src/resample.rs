//! Windowed-sinc polyphase resampler.
//!
//! The kernel is pinned so results are reproducible across platforms:
//! Kaiser window with beta = 14.77, 64 taps per phase, 512 phases with
//! linear interpolation between table entries, cutoff at `min(1, ratio)`
//! times the input Nyquist.

use crate::audio::Waveform;
use crate::scalar::Scalar;

pub const KAISER_BETA: f64 = 14.77;
pub const TAPS: usize = 64;
pub const PHASES: usize = 512;

const HALF: usize = TAPS / 2;

/// Zeroth-order modified Bessel function of the first kind, by power series.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= (half / k) * (half / k);
        sum += term;
        if term < sum * 1e-18 {
            return sum;
        }
        k += 1.0;
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// One-sided base kernel sinc(s) * kaiser(s/HALF) tabulated on a grid of
/// PHASES points per unit, for s in [0, HALF].
fn build_table() -> Vec<f64> {
    let i0_beta = bessel_i0(KAISER_BETA);
    let len = HALF * PHASES + 2;
    (0..len)
        .map(|i| {
            let s = i as f64 / PHASES as f64;
            if s >= HALF as f64 {
                0.0
            } else {
                let x = s / HALF as f64;
                let win = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta;
                sinc(s) * win
            }
        })
        .collect()
}

/// Resample a sample vector by `ratio` = output rate / input rate. Output
/// length is `round(len * ratio)`.
pub fn resample_ratio<T: Scalar>(input: &[T], ratio: f64) -> Vec<T> {
    assert!(ratio.is_finite() && ratio > 0.0, "ratio must be positive");
    let n = input.len();
    let out_len = ((n as f64) * ratio).round() as usize;
    if n == 0 || out_len == 0 {
        return Vec::new();
    }

    // Downsampling stretches the kernel by 1/cutoff in input samples.
    let cutoff = ratio.min(1.0);
    let table = build_table();
    let support = HALF as f64;
    let reach = (support / cutoff).ceil() as isize;

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let pos = m as f64 / ratio;
        let center = pos.floor() as isize;
        let lo = (center - reach).max(0);
        let hi = (center + reach + 1).min(n as isize - 1);
        let mut acc = 0.0;
        for j in lo..=hi {
            let s = ((j as f64 - pos) * cutoff).abs();
            if s >= support {
                continue;
            }
            let q = s * PHASES as f64;
            let i = q as usize;
            let blend = q - i as f64;
            let h = (table[i] + (table[i + 1] - table[i]) * blend) * cutoff;
            acc += input[j as usize].to_f64_c() * h;
        }
        out.push(T::from_f64_c(acc));
    }
    out
}

/// Resample every channel of a waveform to a new sample rate.
pub fn resample<T: Scalar>(w: &Waveform<T>, out_rate: u32) -> Waveform<T> {
    assert!(out_rate > 0);
    if out_rate == w.sample_rate {
        return w.clone();
    }
    let ratio = out_rate as f64 / w.sample_rate as f64;
    let out_len = ((w.len() as f64) * ratio).round() as usize;
    let mut data = ndarray::Array2::zeros((w.channels(), out_len));
    for c in 0..w.channels() {
        let samples: Vec<T> = w.samples(c).to_vec();
        let resampled = resample_ratio(&samples, ratio);
        for (i, v) in resampled.into_iter().enumerate() {
            data[(c, i)] = v;
        }
    }
    Waveform::new(out_rate, data)
}
