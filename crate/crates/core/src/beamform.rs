//! Mask-driven spatial covariance estimation and frequency-domain
//! beamformers: MVDR (Souden form), MPDR, and the convolutional WPD.

use ndarray::{Array2, Array3};
use num_complex::Complex;
use thiserror::Error;

use crate::linalg;
use crate::mask::TimeFreqMask;
use crate::scalar::Scalar;
use crate::stft::ComplexSpectrogram;

/// Floor for the WPD time-varying power weight.
pub const LAMBDA_FLOOR: f64 = 1e-10;

/// Per-frequency stack of C x C Hermitian covariance matrices.
#[derive(Debug, Clone)]
pub struct SpatialCovariance<T> {
    /// Shape F x C x C.
    pub matrices: Array3<Complex<T>>,
    /// Total mask weight per frequency.
    pub mask_mass: Vec<T>,
}

impl<T: Scalar> SpatialCovariance<T> {
    pub fn bins(&self) -> usize {
        self.matrices.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.matrices.shape()[1]
    }

    pub fn matrix(&self, f: usize) -> Array2<Complex<T>> {
        self.matrices.index_axis(ndarray::Axis(0), f).to_owned()
    }
}

/// Per-frequency beamformer weights plus the channel whose source image the
/// beamformer targets.
#[derive(Debug, Clone)]
pub struct BeamformerWeights<T> {
    /// Shape F x C.
    pub weights: Array2<Complex<T>>,
    pub ref_channel: usize,
}

#[derive(Debug, Error)]
pub enum BeamformError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("zero covariance matrix at frequency {f}; cannot extract a steering vector")]
    ZeroMatrix { f: usize },
    #[error("zero or non-finite normalizer at frequency {f}")]
    BadNormalizer { f: usize },
    #[error("need T > delay + taps frames, got T={frames}, delay={delay}, taps={taps}")]
    TooFewFrames { frames: usize, delay: usize, taps: usize },
    #[error("covariance solve failed at frequency {f}: {source}")]
    Solve {
        f: usize,
        #[source]
        source: linalg::LinalgError,
    },
    #[error("reference channel {ref_channel} out of range for {channels} channels")]
    BadRefChannel { ref_channel: usize, channels: usize },
}

/// Mask-weighted spatial covariance:
/// `phi(f) = sum_t m(t,f) y(t,f) y(t,f)^H / (sum_t m(t,f) + eps)`,
/// symmetrized to exact Hermitian form.
pub fn estimate_scm<T: Scalar>(
    spec: &ComplexSpectrogram<T>,
    mask: &TimeFreqMask<T>,
) -> Result<SpatialCovariance<T>, BeamformError> {
    let (t_len, f_len, c_len) = (spec.frames(), spec.bins(), spec.channels());
    if mask.frames() != t_len || mask.bins() != f_len {
        return Err(BeamformError::ShapeMismatch(format!(
            "mask {}x{} vs spectrogram {}x{}",
            mask.frames(),
            mask.bins(),
            t_len,
            f_len
        )));
    }
    let eps = T::from_f64_c(crate::mask::MASK_EPS);
    let mut matrices = Array3::zeros((f_len, c_len, c_len));
    let mut mask_mass = vec![T::zero(); f_len];
    for f in 0..f_len {
        let mut acc: Array2<Complex<T>> = Array2::zeros((c_len, c_len));
        let mut mass = T::zero();
        for t in 0..t_len {
            let m = mask.values[(t, f)];
            mass += m;
            for i in 0..c_len {
                let yi = spec.values[(t, f, i)];
                for j in 0..c_len {
                    let yj = spec.values[(t, f, j)];
                    acc[(i, j)] += yi * yj.conj() * m;
                }
            }
        }
        let denom = mass + eps;
        // Hermitian symmetrization wipes accumulation-order asymmetry.
        for i in 0..c_len {
            for j in 0..c_len {
                let sym = (acc[(i, j)] + acc[(j, i)].conj()) * T::from_f64_c(0.5);
                matrices[(f, i, j)] = sym / denom;
            }
        }
        mask_mass[f] = mass;
    }
    Ok(SpatialCovariance { matrices, mask_mass })
}

fn rotate_first_nonzero_real<T: Scalar>(v: &mut [Complex<T>]) {
    let tiny = T::from_f64_c(1e-12);
    if let Some(lead) = v.iter().find(|x| x.norm() > tiny).copied() {
        let phase = lead.conj() / lead.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

/// Unit-norm principal eigenvector of `scm.matrix(f)` by power iteration,
/// with the first nonzero component rotated to be real positive.
pub fn steering_vector<T: Scalar>(
    scm: &SpatialCovariance<T>,
    f: usize,
) -> Result<Vec<Complex<T>>, BeamformError> {
    let c = scm.channels();
    let a = scm.matrix(f);
    if a.iter().all(|v| v.re == T::zero() && v.im == T::zero()) {
        return Err(BeamformError::ZeroMatrix { f });
    }

    // Start from the strongest column; it lies in the range of the matrix.
    let start_col = (0..c)
        .max_by(|&i, &j| {
            let ni: T = (0..c).map(|r| a[(r, i)].norm_sqr()).sum();
            let nj: T = (0..c).map(|r| a[(r, j)].norm_sqr()).sum();
            ni.partial_cmp(&nj).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    let mut v: Vec<Complex<T>> = (0..c).map(|r| a[(r, start_col)]).collect();
    let norm0: T = v.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt();
    if norm0 <= T::zero() {
        return Err(BeamformError::ZeroMatrix { f });
    }
    for x in v.iter_mut() {
        *x /= norm0;
    }

    let mut prev_eig = T::zero();
    for _ in 0..200 {
        let mut next = vec![Complex::new(T::zero(), T::zero()); c];
        for i in 0..c {
            let mut s = Complex::new(T::zero(), T::zero());
            for j in 0..c {
                s += a[(i, j)] * v[j];
            }
            next[i] = s;
        }
        let norm: T = next.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt();
        if norm <= T::zero() {
            return Err(BeamformError::ZeroMatrix { f });
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        v = next;
        // For a normalized iterate the new norm approximates the eigenvalue.
        let change = (norm - prev_eig).abs() / norm.max(T::from_f64_c(1e-300));
        prev_eig = norm;
        if change < T::from_f64_c(1e-12) {
            break;
        }
    }

    rotate_first_nonzero_real(&mut v);
    Ok(v)
}

/// Steering vectors for every frequency, stacked as an F x C matrix.
pub fn steering_matrix<T: Scalar>(
    scm: &SpatialCovariance<T>,
) -> Result<Array2<Complex<T>>, BeamformError> {
    let (f_len, c_len) = (scm.bins(), scm.channels());
    let mut out = Array2::zeros((f_len, c_len));
    for f in 0..f_len {
        let d = steering_vector(scm, f)?;
        for c in 0..c_len {
            out[(f, c)] = d[c];
        }
    }
    Ok(out)
}

/// Souden-form MVDR:
/// `w = (phi_n^-1 phi_s / trace(phi_n^-1 phi_s)) u_ref` per frequency, with
/// diagonal loading on the noise covariance.
pub fn mvdr_souden<T: Scalar>(
    scm_s: &SpatialCovariance<T>,
    scm_n: &SpatialCovariance<T>,
    ref_channel: usize,
) -> Result<BeamformerWeights<T>, BeamformError> {
    let (f_len, c_len) = (scm_s.bins(), scm_s.channels());
    if scm_n.bins() != f_len || scm_n.channels() != c_len {
        return Err(BeamformError::ShapeMismatch(format!(
            "noise SCM is {}x{} channels, source SCM is {}x{}",
            scm_n.bins(),
            scm_n.channels(),
            f_len,
            c_len
        )));
    }
    if ref_channel >= c_len {
        return Err(BeamformError::BadRefChannel { ref_channel, channels: c_len });
    }

    let mut weights = Array2::zeros((f_len, c_len));
    for f in 0..f_len {
        let phi_n = linalg::load_diagonal(&scm_n.matrix(f));
        let phi_s = scm_s.matrix(f);
        let numerator = linalg::solve_hermitian(&phi_n, &phi_s)
            .map_err(|source| BeamformError::Solve { f, source })?;
        let mut trace = Complex::new(T::zero(), T::zero());
        for i in 0..c_len {
            trace += numerator[(i, i)];
        }
        if !trace.re.is_finite() || !trace.im.is_finite() || trace.norm() <= T::zero() {
            return Err(BeamformError::BadNormalizer { f });
        }
        for i in 0..c_len {
            weights[(f, i)] = numerator[(i, ref_channel)] / trace;
        }
    }
    Ok(BeamformerWeights { weights, ref_channel })
}

/// MPDR: `w = phi_y^-1 d / (d^H phi_y^-1 d)`, scaled by `conj(d_ref)` so the
/// output is the reference-channel source image. `steering` holds one
/// C-vector per frequency (rows).
pub fn mpdr<T: Scalar>(
    scm_y: &SpatialCovariance<T>,
    steering: &Array2<Complex<T>>,
    ref_channel: usize,
) -> Result<BeamformerWeights<T>, BeamformError> {
    let (f_len, c_len) = (scm_y.bins(), scm_y.channels());
    if steering.nrows() != f_len || steering.ncols() != c_len {
        return Err(BeamformError::ShapeMismatch(format!(
            "steering is {}x{}, expected {}x{}",
            steering.nrows(),
            steering.ncols(),
            f_len,
            c_len
        )));
    }
    if ref_channel >= c_len {
        return Err(BeamformError::BadRefChannel { ref_channel, channels: c_len });
    }

    let mut weights = Array2::zeros((f_len, c_len));
    for f in 0..f_len {
        let phi_y = linalg::load_diagonal(&scm_y.matrix(f));
        let d: Vec<Complex<T>> = (0..c_len).map(|c| steering[(f, c)]).collect();
        let x = linalg::solve_hermitian_vec(&phi_y, &d)
            .map_err(|source| BeamformError::Solve { f, source })?;
        let mut denom = Complex::new(T::zero(), T::zero());
        for c in 0..c_len {
            denom += d[c].conj() * x[c];
        }
        if !denom.re.is_finite() || denom.re <= T::zero() {
            return Err(BeamformError::BadNormalizer { f });
        }
        let scale = d[ref_channel].conj() / denom.re;
        for c in 0..c_len {
            weights[(f, c)] = x[c] * scale;
        }
    }
    Ok(BeamformerWeights { weights, ref_channel })
}

/// WPD filter: per-frequency stacked weights together with the steering
/// vectors that define the distortionless constraint.
#[derive(Debug, Clone)]
pub struct WpdFilter<T> {
    /// Shape F x C*(taps+1); weight on the current frame first, then on the
    /// delayed context frames.
    pub weights: Array2<Complex<T>>,
    /// Shape F x C.
    pub steering: Array2<Complex<T>>,
    pub delay: usize,
    pub taps: usize,
    pub ref_channel: usize,
}

fn fill_stacked<T: Scalar>(
    buf: &mut [Complex<T>],
    spec: &ComplexSpectrogram<T>,
    t: usize,
    f: usize,
    delay: usize,
    taps: usize,
) {
    let c_len = spec.channels();
    for c in 0..c_len {
        buf[c] = spec.values[(t, f, c)];
    }
    for k in 0..taps {
        let idx = (k + 1) * c_len;
        match t.checked_sub(delay + k) {
            Some(tp) => {
                for c in 0..c_len {
                    buf[idx + c] = spec.values[(tp, f, c)];
                }
            }
            None => {
                for c in 0..c_len {
                    buf[idx + c] = Complex::new(T::zero(), T::zero());
                }
            }
        }
    }
}

/// Solve the WPD system: steering from the mask-weighted SCM, time-varying
/// power `lambda(t,f) = max(m * mean_c |y|^2, floor)`, and per frequency
/// `w = R^-1 d_stacked / (d^H R^-1 d)` scaled by `conj(d_ref)`.
pub fn wpd_filter<T: Scalar>(
    spec: &ComplexSpectrogram<T>,
    source_mask: &TimeFreqMask<T>,
    delay: usize,
    taps: usize,
    ref_channel: usize,
) -> Result<WpdFilter<T>, BeamformError> {
    let (t_len, f_len, c_len) = (spec.frames(), spec.bins(), spec.channels());
    if source_mask.frames() != t_len || source_mask.bins() != f_len {
        return Err(BeamformError::ShapeMismatch(format!(
            "mask {}x{} vs spectrogram {}x{}",
            source_mask.frames(),
            source_mask.bins(),
            t_len,
            f_len
        )));
    }
    if ref_channel >= c_len {
        return Err(BeamformError::BadRefChannel { ref_channel, channels: c_len });
    }
    if t_len <= delay + taps {
        return Err(BeamformError::TooFewFrames { frames: t_len, delay, taps });
    }

    let scm_s = estimate_scm(spec, source_mask)?;
    let steering = steering_matrix_or_selector(&scm_s, ref_channel);

    let stacked = c_len * (taps + 1);
    let floor = T::from_f64_c(LAMBDA_FLOOR);
    let inv_c = T::one() / T::from_f64_c(c_len as f64);
    let mut weights = Array2::zeros((f_len, stacked));
    let mut ybuf = vec![Complex::new(T::zero(), T::zero()); stacked];

    for f in 0..f_len {
        let lambda: Vec<T> = (0..t_len)
            .map(|t| {
                let pow: T = (0..c_len).map(|c| spec.values[(t, f, c)].norm_sqr()).sum();
                (source_mask.values[(t, f)] * pow * inv_c).max(floor)
            })
            .collect();

        let mut r: Array2<Complex<T>> = Array2::zeros((stacked, stacked));
        for t in 0..t_len {
            fill_stacked(&mut ybuf, spec, t, f, delay, taps);
            let inv_l = T::one() / lambda[t];
            for i in 0..stacked {
                for j in 0..stacked {
                    r[(i, j)] += ybuf[i] * ybuf[j].conj() * inv_l;
                }
            }
        }
        for i in 0..stacked {
            for j in 0..i {
                let sym = (r[(i, j)] + r[(j, i)].conj()) * T::from_f64_c(0.5);
                r[(i, j)] = sym;
                r[(j, i)] = sym.conj();
            }
            r[(i, i)] = Complex::new(r[(i, i)].re, T::zero());
        }

        let mut d_t = vec![Complex::new(T::zero(), T::zero()); stacked];
        for c in 0..c_len {
            d_t[c] = steering[(f, c)];
        }

        let loaded = linalg::load_diagonal(&r);
        let x = linalg::solve_hermitian_vec(&loaded, &d_t)
            .map_err(|source| BeamformError::Solve { f, source })?;
        let mut denom = Complex::new(T::zero(), T::zero());
        for i in 0..stacked {
            denom += d_t[i].conj() * x[i];
        }
        if !denom.re.is_finite() || denom.re <= T::zero() {
            return Err(BeamformError::BadNormalizer { f });
        }
        let scale = d_t[ref_channel].conj() / denom.re;
        for i in 0..stacked {
            weights[(f, i)] = x[i] * scale;
        }
    }

    Ok(WpdFilter { weights, steering, delay, taps, ref_channel })
}

/// `x(t,f) = w(f)^H y_stacked(t,f)` for a WPD filter.
pub fn apply_wpd<T: Scalar>(
    filter: &WpdFilter<T>,
    spec: &ComplexSpectrogram<T>,
) -> Result<ComplexSpectrogram<T>, BeamformError> {
    let (t_len, f_len, c_len) = (spec.frames(), spec.bins(), spec.channels());
    let stacked = c_len * (filter.taps + 1);
    if filter.weights.nrows() != f_len || filter.weights.ncols() != stacked {
        return Err(BeamformError::ShapeMismatch(format!(
            "filter is {}x{}, spectrogram needs {}x{}",
            filter.weights.nrows(),
            filter.weights.ncols(),
            f_len,
            stacked
        )));
    }
    let mut out = Array3::zeros((t_len, f_len, 1));
    let mut ybuf = vec![Complex::new(T::zero(), T::zero()); stacked];
    for f in 0..f_len {
        for t in 0..t_len {
            fill_stacked(&mut ybuf, spec, t, f, filter.delay, filter.taps);
            let mut s = Complex::new(T::zero(), T::zero());
            for i in 0..stacked {
                s += filter.weights[(f, i)].conj() * ybuf[i];
            }
            out[(t, f, 0)] = s;
        }
    }
    Ok(ComplexSpectrogram {
        values: out,
        config: spec.config,
        sample_rate: spec.sample_rate,
        original_length: spec.original_length,
    })
}

/// Convolutional WPD beamformer: solve the filter and apply it, returning the
/// single-channel enhanced spectrogram.
pub fn wpd<T: Scalar>(
    spec: &ComplexSpectrogram<T>,
    source_mask: &TimeFreqMask<T>,
    delay: usize,
    taps: usize,
    ref_channel: usize,
) -> Result<ComplexSpectrogram<T>, BeamformError> {
    let filter = wpd_filter(spec, source_mask, delay, taps, ref_channel)?;
    apply_wpd(&filter, spec)
}

/// Like [`steering_matrix`] but frequencies whose covariance is exactly zero
/// fall back to the reference-channel selector vector instead of failing.
pub fn steering_matrix_or_selector<T: Scalar>(
    scm: &SpatialCovariance<T>,
    ref_channel: usize,
) -> Array2<Complex<T>> {
    let (f_len, c_len) = (scm.bins(), scm.channels());
    let mut out = Array2::zeros((f_len, c_len));
    for f in 0..f_len {
        match steering_vector(scm, f) {
            Ok(d) => {
                for c in 0..c_len {
                    out[(f, c)] = d[c];
                }
            }
            Err(_) => {
                out[(f, ref_channel.min(c_len - 1))] = Complex::new(T::one(), T::zero());
            }
        }
    }
    out
}

/// `x(t,f) = w(f)^H y(t,f)`, collapsing C channels to one.
pub fn apply_beamformer<T: Scalar>(
    weights: &BeamformerWeights<T>,
    spec: &ComplexSpectrogram<T>,
) -> Result<ComplexSpectrogram<T>, BeamformError> {
    let (t_len, f_len, c_len) = (spec.frames(), spec.bins(), spec.channels());
    if weights.weights.nrows() != f_len || weights.weights.ncols() != c_len {
        return Err(BeamformError::ShapeMismatch(format!(
            "weights are {}x{}, spectrogram needs {}x{}",
            weights.weights.nrows(),
            weights.weights.ncols(),
            f_len,
            c_len
        )));
    }
    let mut out = Array3::zeros((t_len, f_len, 1));
    for t in 0..t_len {
        for f in 0..f_len {
            let mut s = Complex::new(T::zero(), T::zero());
            for c in 0..c_len {
                s += weights.weights[(f, c)].conj() * spec.values[(t, f, c)];
            }
            out[(t, f, 0)] = s;
        }
    }
    Ok(ComplexSpectrogram {
        values: out,
        config: spec.config,
        sample_rate: spec.sample_rate,
        original_length: spec.original_length,
    })
}

/// Reference channel with the largest mask-weighted power ratio
/// `phi_s(c,c)/phi_n(c,c)` summed over frequencies.
pub fn select_ref_channel<T: Scalar>(
    scm_s: &SpatialCovariance<T>,
    scm_n: &SpatialCovariance<T>,
) -> usize {
    let c_len = scm_s.channels();
    let tiny = T::from_f64_c(1e-30);
    (0..c_len)
        .max_by(|&a, &b| {
            let score = |c: usize| -> T {
                (0..scm_s.bins())
                    .map(|f| scm_s.matrices[(f, c, c)].re / (scm_n.matrices[(f, c, c)].re + tiny))
                    .sum()
            };
            score(a).partial_cmp(&score(b)).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0)
}
