//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Analysis windows the signal and keeps the one-sided spectrum; synthesis
//! overlap-adds inverse transforms and divides by the accumulated window
//! product, which reconstructs the input exactly for any
//! constant-overlap-add (window, hop) pair.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::Waveform;
use crate::scalar::Scalar;

/// Analysis/synthesis window shape.
///
/// `Hann` is applied at analysis only (plain overlap-add synthesis);
/// `SqrtHann` is applied at both analysis and synthesis (weighted
/// overlap-add). Both are periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
    SqrtHann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    /// FFT length in samples; power of two, at least 16.
    pub n_fft: usize,
    /// Frame advance in samples; `0 < hop <= n_fft`.
    pub hop: usize,
    pub window: Window,
    /// Reflect-pad by `n_fft/2` on both ends before framing.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        // 32 ms / 8 ms at 16 kHz.
        StftConfig { n_fft: 512, hop: 128, window: Window::Hann, center: true }
    }
}

#[derive(Debug, Error)]
pub enum StftError {
    #[error("invalid STFT config: {0}")]
    InvalidConfig(String),
    #[error("waveform of {len} samples is shorter than n_fft={n_fft} with center=false")]
    TooShort { len: usize, n_fft: usize },
    #[error("empty waveform")]
    EmptyWaveform,
    #[error("zero synthesis window sum at sample {sample}; (window, hop) pair cannot reconstruct")]
    ZeroWindowSum { sample: usize },
}

impl StftConfig {
    pub fn check(&self) -> Result<(), StftError> {
        if self.n_fft < 16 || !self.n_fft.is_power_of_two() {
            return Err(StftError::InvalidConfig(format!(
                "n_fft must be a power of two >= 16, got {}",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(StftError::InvalidConfig(format!(
                "hop must satisfy 0 < hop <= n_fft, got {}",
                self.hop
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Periodic Hann window of length `n`, or its square root.
pub fn window_values<T: Scalar>(window: Window, n: usize) -> Array1<T> {
    let two_pi = T::from_f64_c(std::f64::consts::TAU);
    let half = T::from_f64_c(0.5);
    Array1::from_shape_fn(n, |i| {
        let phase = two_pi * T::from_f64_c(i as f64) / T::from_f64_c(n as f64);
        let hann = half * (T::one() - phase.cos());
        match window {
            Window::Hann => hann,
            Window::SqrtHann => hann.sqrt(),
        }
    })
}

/// STFT tensor: frames x bins x channels, one-sided spectrum, together with
/// everything needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T> {
    pub values: Array3<Complex<T>>,
    pub config: StftConfig,
    pub sample_rate: u32,
    pub original_length: usize,
}

impl<T: Scalar> ComplexSpectrogram<T> {
    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[2]
    }

    /// Copy of one channel as a single-channel spectrogram.
    pub fn channel(&self, c: usize) -> ComplexSpectrogram<T> {
        let view = self.values.slice(ndarray::s![.., .., c..c + 1]);
        ComplexSpectrogram {
            values: view.to_owned(),
            config: self.config,
            sample_rate: self.sample_rate,
            original_length: self.original_length,
        }
    }

    /// Magnitude of a single-channel spectrogram as frames x bins.
    pub fn magnitude(&self) -> Array2<T> {
        assert_eq!(self.channels(), 1, "magnitude() expects a single channel");
        Array2::from_shape_fn((self.frames(), self.bins()), |(t, f)| self.values[(t, f, 0)].norm())
    }
}

/// Reflect index `i` into `[0, n)` without repeating the edge sample.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Forward STFT of every channel.
pub fn analyze<T: Scalar>(w: &Waveform<T>, cfg: StftConfig) -> Result<ComplexSpectrogram<T>, StftError> {
    cfg.check()?;
    let n = w.len();
    if n == 0 {
        return Err(StftError::EmptyWaveform);
    }
    if !cfg.center && n < cfg.n_fft {
        return Err(StftError::TooShort { len: n, n_fft: cfg.n_fft });
    }

    let pad = if cfg.center { cfg.n_fft / 2 } else { 0 };
    let padded_len = n + 2 * pad;
    let frames = 1 + (padded_len - cfg.n_fft) / cfg.hop;
    let bins = cfg.bins();
    let channels = w.channels();

    let window = window_values::<T>(cfg.window, cfg.n_fft);
    let fft = FftPlanner::<T>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.n_fft];

    let mut values = Array3::zeros((frames, bins, channels));
    for c in 0..channels {
        // Padded view of the channel via reflected indexing.
        let sample = |p: usize| -> T {
            let i = p as isize - pad as isize;
            if i >= 0 && (i as usize) < n {
                w.data[(c, i as usize)]
            } else {
                w.data[(c, reflect_index(i, n))]
            }
        };
        for t in 0..frames {
            let start = t * cfg.hop;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(sample(start + k) * window[k], T::zero());
            }
            fft.process(&mut buf);
            for f in 0..bins {
                values[(t, f, c)] = buf[f];
            }
        }
    }

    Ok(ComplexSpectrogram { values, config: cfg, sample_rate: w.sample_rate, original_length: n })
}

/// Inverse STFT by overlap-add; output length equals the analyzed
/// waveform's `original_length`.
pub fn synthesize<T: Scalar>(s: &ComplexSpectrogram<T>) -> Result<Waveform<T>, StftError> {
    let cfg = s.config;
    cfg.check()?;
    let frames = s.frames();
    let bins = s.bins();
    if bins != cfg.bins() {
        return Err(StftError::InvalidConfig(format!(
            "spectrogram has {bins} bins but config implies {}",
            cfg.bins()
        )));
    }
    let channels = s.channels();
    let n_fft = cfg.n_fft;
    let pad = if cfg.center { n_fft / 2 } else { 0 };
    let ola_len = if frames == 0 { 0 } else { (frames - 1) * cfg.hop + n_fft };

    let analysis = window_values::<T>(cfg.window, n_fft);
    let synthesis: Option<Array1<T>> = match cfg.window {
        Window::Hann => None,
        Window::SqrtHann => Some(analysis.clone()),
    };

    // The normalizer is the accumulated product of analysis and synthesis
    // windows, identical for every channel.
    let mut wsum = vec![T::zero(); ola_len];
    for t in 0..frames {
        for k in 0..n_fft {
            let prod = match &synthesis {
                Some(sw) => analysis[k] * sw[k],
                None => analysis[k],
            };
            wsum[t * cfg.hop + k] += prod;
        }
    }

    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n_fft);
    let inv_n = T::one() / T::from_f64_c(n_fft as f64);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];

    let mut out = Array2::zeros((channels, s.original_length));
    let mut ola = vec![T::zero(); ola_len];
    for c in 0..channels {
        ola.iter_mut().for_each(|v| *v = T::zero());
        for t in 0..frames {
            // Rebuild the full spectrum from the one-sided half.
            for f in 0..bins {
                buf[f] = s.values[(t, f, c)];
            }
            for f in bins..n_fft {
                buf[f] = s.values[(t, n_fft - f, c)].conj();
            }
            ifft.process(&mut buf);
            for k in 0..n_fft {
                let mut v = buf[k].re * inv_n;
                if let Some(sw) = &synthesis {
                    v *= sw[k];
                }
                ola[t * cfg.hop + k] += v;
            }
        }

        let tiny = T::from_f64_c(1e-12);
        for i in 0..s.original_length {
            let p = i + pad;
            if p >= ola_len {
                // Frame grid did not reach this sample (possible only for
                // degenerate frame counts); leave zero.
                continue;
            }
            if wsum[p].abs() <= tiny {
                return Err(StftError::ZeroWindowSum { sample: i });
            }
            out[(c, i)] = ola[p] / wsum[p];
        }
    }

    Ok(Waveform::new(s.sample_rate, out))
}

/// True iff the (window, hop) pair satisfies the constant-overlap-add
/// condition within 1e-10 relative deviation.
pub fn validate_config(cfg: &StftConfig) -> bool {
    if cfg.check().is_err() {
        return false;
    }
    // Product of analysis and synthesis windows, tiled at the hop period.
    let u: Array1<f64> = {
        let w = window_values::<f64>(cfg.window, cfg.n_fft);
        match cfg.window {
            Window::Hann => w,
            Window::SqrtHann => &w * &w,
        }
    };
    let mut tiled = vec![0.0f64; cfg.hop];
    for (k, v) in u.iter().enumerate() {
        tiled[k % cfg.hop] += v;
    }
    let mean = tiled.iter().sum::<f64>() / cfg.hop as f64;
    if mean <= 0.0 {
        return false;
    }
    tiled.iter().all(|&v| ((v - mean) / mean).abs() <= 1e-10 && v > 0.0)
}
