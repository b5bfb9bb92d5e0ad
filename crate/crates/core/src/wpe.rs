//! Iterative weighted prediction error (WPE) dereverberation.
//!
//! Late reverberation is modeled as a linear prediction from delayed
//! multichannel context; the predictable part is subtracted per frequency.

use ndarray::{Array2, Array3};
use num_complex::Complex;
use thiserror::Error;

use crate::linalg;
use crate::scalar::Scalar;
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WpeConfig {
    /// Prediction filter taps per channel; 0 disables prediction.
    pub taps: usize,
    /// Frames between the predicted frame and the newest context frame.
    pub delay: usize,
    pub iterations: usize,
    /// Floor for the per-frame power weight.
    pub eps: f64,
}

impl Default for WpeConfig {
    fn default() -> Self {
        WpeConfig { taps: 10, delay: 3, iterations: 3, eps: 1e-10 }
    }
}

#[derive(Debug, Error)]
pub enum WpeError {
    #[error("invalid WPE config: {0}")]
    InvalidConfig(String),
    #[error("need T > delay + taps frames, got T={frames}, delay={delay}, taps={taps}")]
    TooFewFrames { frames: usize, delay: usize, taps: usize },
    #[error("correlation solve failed at frequency {f}: {source}")]
    Solve {
        f: usize,
        #[source]
        source: linalg::LinalgError,
    },
}

/// Batch WPE. Returns the dereverberated spectrogram with every channel
/// preserved; `iterations == 0` or `taps == 0` returns the input unchanged.
pub fn wpe<T: Scalar>(
    spec: &ComplexSpectrogram<T>,
    cfg: &WpeConfig,
) -> Result<ComplexSpectrogram<T>, WpeError> {
    if cfg.delay < 1 {
        return Err(WpeError::InvalidConfig(format!("delay must be >= 1, got {}", cfg.delay)));
    }
    if cfg.iterations == 0 || cfg.taps == 0 {
        return Ok(spec.clone());
    }
    let (t_len, f_len, c_len) = (spec.frames(), spec.bins(), spec.channels());
    if t_len <= cfg.delay + cfg.taps {
        return Err(WpeError::TooFewFrames { frames: t_len, delay: cfg.delay, taps: cfg.taps });
    }

    let ck = c_len * cfg.taps;
    let floor = T::from_f64_c(cfg.eps);
    let inv_c = T::one() / T::from_f64_c(c_len as f64);
    let mut out = Array3::zeros((t_len, f_len, c_len));

    // Context for frame t: frames t-delay, t-delay-1, ..., t-delay-taps+1,
    // all channels per frame, zero-padded before the start.
    let mut contexts = vec![Complex::new(T::zero(), T::zero()); t_len * ck];
    for f in 0..f_len {
        for t in 0..t_len {
            let base = t * ck;
            for k in 0..cfg.taps {
                match t.checked_sub(cfg.delay + k) {
                    Some(tp) => {
                        for c in 0..c_len {
                            contexts[base + k * c_len + c] = spec.values[(tp, f, c)];
                        }
                    }
                    None => {
                        for c in 0..c_len {
                            contexts[base + k * c_len + c] = Complex::new(T::zero(), T::zero());
                        }
                    }
                }
            }
        }

        // d starts as the observation.
        let mut d: Array2<Complex<T>> =
            Array2::from_shape_fn((t_len, c_len), |(t, c)| spec.values[(t, f, c)]);

        for _ in 0..cfg.iterations {
            let lambda: Vec<T> = (0..t_len)
                .map(|t| {
                    let pow: T = (0..c_len).map(|c| d[(t, c)].norm_sqr()).sum();
                    (pow * inv_c).max(floor)
                })
                .collect();

            let mut a: Array2<Complex<T>> = Array2::zeros((ck, ck));
            let mut b: Array2<Complex<T>> = Array2::zeros((ck, c_len));
            for t in 0..t_len {
                let ctx = &contexts[t * ck..(t + 1) * ck];
                let inv_l = T::one() / lambda[t];
                for i in 0..ck {
                    let yi = ctx[i] * inv_l;
                    for j in 0..ck {
                        a[(i, j)] += yi * ctx[j].conj();
                    }
                    for c in 0..c_len {
                        b[(i, c)] += yi * spec.values[(t, f, c)].conj();
                    }
                }
            }
            for i in 0..ck {
                for j in 0..i {
                    let sym = (a[(i, j)] + a[(j, i)].conj()) * T::from_f64_c(0.5);
                    a[(i, j)] = sym;
                    a[(j, i)] = sym.conj();
                }
                a[(i, i)] = Complex::new(a[(i, i)].re, T::zero());
            }

            let loaded = linalg::load_diagonal(&a);
            let g = linalg::solve_hermitian(&loaded, &b)
                .map_err(|source| WpeError::Solve { f, source })?;

            for t in 0..t_len {
                let ctx = &contexts[t * ck..(t + 1) * ck];
                for c in 0..c_len {
                    let mut pred = Complex::new(T::zero(), T::zero());
                    for i in 0..ck {
                        pred += g[(i, c)].conj() * ctx[i];
                    }
                    d[(t, c)] = spec.values[(t, f, c)] - pred;
                }
            }
        }

        for t in 0..t_len {
            for c in 0..c_len {
                out[(t, f, c)] = d[(t, c)];
            }
        }
    }

    Ok(ComplexSpectrogram {
        values: out,
        config: spec.config,
        sample_rate: spec.sample_rate,
        original_length: spec.original_length,
    })
}
