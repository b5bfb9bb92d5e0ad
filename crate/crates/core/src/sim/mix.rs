//! SNR-controlled mixing, FFT convolution, and speed perturbation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::SimError;
use crate::audio::Waveform;
use crate::resample::resample_ratio;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct MixOutput<T> {
    pub mixture: Waveform<T>,
    pub scaled_noise: Waveform<T>,
    /// Gain applied to the noise to hit the requested SNR.
    pub gain: f64,
}

fn mean_power<T: Scalar>(w: &Waveform<T>) -> f64 {
    let n = (w.channels() * w.len()) as f64;
    w.data.iter().map(|v| v.to_f64_c().powi(2)).sum::<f64>() / n
}

/// Scale `noise` so that `10 log10(P_speech / P_noise)` equals `snr`, then
/// add it to `speech`. Powers are averaged over every sample and channel.
pub fn mix_at_snr<T: Scalar>(
    speech: &Waveform<T>,
    noise: &Waveform<T>,
    snr: f64,
) -> Result<MixOutput<T>, SimError> {
    if speech.len() != noise.len() || speech.channels() != noise.channels() {
        return Err(SimError::ShapeMismatch(format!(
            "speech {}x{} vs noise {}x{}",
            speech.channels(),
            speech.len(),
            noise.channels(),
            noise.len()
        )));
    }
    if !snr.is_finite() {
        return Err(SimError::InvalidParameter(format!("snr {snr} is not finite")));
    }
    let p_speech = mean_power(speech);
    let p_noise = mean_power(noise);
    if p_speech <= 0.0 {
        return Err(SimError::ZeroPower("speech"));
    }
    if p_noise <= 0.0 {
        return Err(SimError::ZeroPower("noise"));
    }
    let gain = (p_speech / (p_noise * 10.0f64.powf(snr / 10.0))).sqrt();
    let g = T::from_f64_c(gain);
    let scaled = noise.data.mapv(|v| v * g);
    let mixture = Waveform::new(speech.sample_rate, &speech.data + &scaled);
    Ok(MixOutput {
        mixture,
        scaled_noise: Waveform::new(noise.sample_rate, scaled),
        gain,
    })
}

/// Full linear convolution truncated to the dry signal's length, so wet and
/// dry stay sample-aligned.
pub fn convolve<T: Scalar>(w: &Waveform<T>, rir: &Waveform<T>) -> Result<Waveform<T>, SimError> {
    if w.channels() != 1 || rir.channels() != 1 {
        return Err(SimError::ShapeMismatch(format!(
            "convolve takes mono signals, got {} and {} channels",
            w.channels(),
            rir.channels()
        )));
    }
    if w.is_empty() || rir.is_empty() {
        return Err(SimError::InvalidParameter("convolve inputs must be nonempty".into()));
    }
    let n = w.len();
    let size = (n + rir.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut a = vec![Complex::new(T::zero(), T::zero()); size];
    for (slot, &v) in a.iter_mut().zip(w.samples(0)) {
        slot.re = v;
    }
    let mut b = vec![Complex::new(T::zero(), T::zero()); size];
    for (slot, &v) in b.iter_mut().zip(rir.samples(0)) {
        slot.re = v;
    }
    fwd.process(&mut a);
    fwd.process(&mut b);
    let scale = T::one() / T::from_f64_c(size as f64);
    for (x, y) in a.iter_mut().zip(&b) {
        *x = *x * *y * scale;
    }
    inv.process(&mut a);
    Ok(Waveform::from_mono(
        w.sample_rate,
        a[..n].iter().map(|c| c.re).collect(),
    ))
}

/// Sox-style speed change: resample by 1/factor and keep the nominal rate,
/// so every frequency component scales by `factor`.
pub fn speed_perturb<T: Scalar>(w: &Waveform<T>, factor: f64) -> Result<Waveform<T>, SimError> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(SimError::FactorOutOfRange(factor));
    }
    let rows: Vec<Vec<T>> = (0..w.channels())
        .map(|c| resample_ratio(w.samples(c).as_slice().unwrap(), 1.0 / factor))
        .collect();
    let out_len = rows[0].len();
    let mut data = ndarray::Array2::zeros((w.channels(), out_len));
    for (c, row) in rows.into_iter().enumerate() {
        data.row_mut(c).assign(&ndarray::Array1::from(row));
    }
    Ok(Waveform::new(w.sample_rate, data))
}
