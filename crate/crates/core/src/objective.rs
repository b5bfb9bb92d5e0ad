//! Scalar training-style objectives: mask and signal approximation losses,
//! SI-SNR loss, permutation-invariant resolution, and the mixture-invariant
//! unsupervised loss. No gradients; these exist for evaluation and oracle
//! studies.

use ndarray::Array2;
use thiserror::Error;

use crate::audio::Waveform;
use crate::mask::TimeFreqMask;
use crate::metrics::si_snr;
use crate::scalar::Scalar;
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskLossKind {
    Mse,
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalLossDomain {
    Magnitude,
    Complex,
}

/// A resolved loss: the scalar value, the pairwise matrix when one was
/// searched, and the chosen estimate-to-reference assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub per_pair: Option<Array2<f64>>,
    /// For PIT: estimate i pairs with reference `permutation[i]`.
    /// For MixIT: estimate i sums into mixture `permutation[i]` (0 or 1).
    pub permutation: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cross-entropy needs reference mask values in [0, 1]")]
    CeRangeViolation,
    #[error("loss matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{sources} sources exceed the exhaustive-search limit of {limit}")]
    TooManySources { sources: usize, limit: usize },
    #[error("degenerate reference signal (all zero after mean removal)")]
    DegenerateReference,
    #[error("waveform lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// MSE or clamped cross-entropy between mask estimates and targets.
pub fn mask_loss<T: Scalar>(
    est: &TimeFreqMask<T>,
    reference: &TimeFreqMask<T>,
    kind: MaskLossKind,
) -> Result<f64, ObjectiveError> {
    if est.values.dim() != reference.values.dim() {
        return Err(ObjectiveError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            est.values.dim(),
            reference.values.dim()
        )));
    }
    let n = est.values.len() as f64;
    match kind {
        MaskLossKind::Mse => {
            let sum: f64 = est
                .values
                .iter()
                .zip(reference.values.iter())
                .map(|(&e, &r)| {
                    let d = (e - r).to_f64_c();
                    d * d
                })
                .sum();
            Ok(sum / n)
        }
        MaskLossKind::Ce => {
            if reference.values.iter().any(|&r| r < T::zero() || r > T::one()) {
                return Err(ObjectiveError::CeRangeViolation);
            }
            let sum: f64 = est
                .values
                .iter()
                .zip(reference.values.iter())
                .map(|(&e, &r)| {
                    let e = e.to_f64_c().clamp(1e-7, 1.0 - 1e-7);
                    let r = r.to_f64_c();
                    -(r * e.ln() + (1.0 - r) * (1.0 - e).ln())
                })
                .sum();
            Ok(sum / n)
        }
    }
}

/// Mean squared spectral error, on magnitudes or on the complex values.
pub fn signal_approx_loss<T: Scalar>(
    est: &ComplexSpectrogram<T>,
    reference: &ComplexSpectrogram<T>,
    domain: SignalLossDomain,
) -> Result<f64, ObjectiveError> {
    if est.values.dim() != reference.values.dim() {
        return Err(ObjectiveError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            est.values.dim(),
            reference.values.dim()
        )));
    }
    let n = est.values.len() as f64;
    let sum: f64 = est
        .values
        .iter()
        .zip(reference.values.iter())
        .map(|(&e, &r)| match domain {
            SignalLossDomain::Magnitude => {
                let d = (e.norm() - r.norm()).to_f64_c();
                d * d
            }
            SignalLossDomain::Complex => (e - r).norm_sqr().to_f64_c(),
        })
        .sum();
    Ok(sum / n)
}

/// Negative SI-SNR in dB; lower is better, capped at -120 for a perfect
/// estimate.
pub fn si_snr_loss<T: Scalar>(
    est: &Waveform<T>,
    reference: &Waveform<T>,
) -> Result<f64, ObjectiveError> {
    if est.len() != reference.len() {
        return Err(ObjectiveError::LengthMismatch(est.len(), reference.len()));
    }
    match si_snr(est, reference) {
        Ok(v) => Ok(-v),
        Err(crate::metrics::MetricError::ZeroReference) => {
            Err(ObjectiveError::DegenerateReference)
        }
        Err(e) => Err(ObjectiveError::ShapeMismatch(e.to_string())),
    }
}

/// Visit every permutation of `0..n` in lexicographic order.
pub(crate) fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(
        n: usize,
        used: &mut Vec<bool>,
        stack: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if stack.len() == n {
            visit(stack);
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                stack.push(v);
                rec(n, used, stack, visit);
                stack.pop();
                used[v] = false;
            }
        }
    }
    let mut used = vec![false; n];
    let mut stack: Vec<usize> = Vec::with_capacity(n);
    rec(n, &mut used, &mut stack, &mut visit);
}

pub(crate) const PIT_LIMIT: usize = 8;

/// Exhaustive permutation-invariant resolution: the permutation minimizing
/// the mean of selected `loss_matrix[est][ref]` entries, lexicographically
/// smallest among ties.
pub fn pit_resolve(loss_matrix: &Array2<f64>) -> Result<LossValue, ObjectiveError> {
    let (rows, cols) = loss_matrix.dim();
    if rows != cols {
        return Err(ObjectiveError::NotSquare { rows, cols });
    }
    if rows > PIT_LIMIT {
        return Err(ObjectiveError::TooManySources { sources: rows, limit: PIT_LIMIT });
    }
    if rows == 0 {
        return Err(ObjectiveError::NotSquare { rows, cols });
    }

    let mut best_perm: Option<Vec<usize>> = None;
    let mut best_sum = f64::INFINITY;
    for_each_permutation(rows, |perm| {
        let sum: f64 = perm.iter().enumerate().map(|(i, &j)| loss_matrix[(i, j)]).sum();
        // Strict improvement keeps the lexicographically first minimizer.
        if sum < best_sum {
            best_sum = sum;
            best_perm = Some(perm.to_vec());
        }
    });
    let permutation = best_perm.expect("at least one permutation");
    Ok(LossValue {
        value: best_sum / rows as f64,
        per_pair: Some(loss_matrix.clone()),
        permutation,
    })
}

const MIXIT_MIN: usize = 2;
const MIXIT_MAX: usize = 8;

/// Mixture-invariant loss: assign each estimate to one of two mixtures so the
/// summed estimates reconstruct them best, scored by mean SI-SNR loss.
pub fn mixit_loss<T: Scalar>(
    ests: &[Waveform<T>],
    mixtures: &[Waveform<T>; 2],
) -> Result<LossValue, ObjectiveError> {
    let m = ests.len();
    if !(MIXIT_MIN..=MIXIT_MAX).contains(&m) {
        return Err(ObjectiveError::TooManySources { sources: m, limit: MIXIT_MAX });
    }
    let len = mixtures[0].len();
    for w in ests.iter().chain(mixtures.iter()) {
        if w.len() != len {
            return Err(ObjectiveError::LengthMismatch(w.len(), len));
        }
    }

    let mut best_value = f64::INFINITY;
    let mut best_assign: Vec<usize> = Vec::new();
    let mut sums = [vec![T::zero(); len], vec![T::zero(); len]];
    for bits in 0..(1u32 << m) {
        sums[0].iter_mut().for_each(|v| *v = T::zero());
        sums[1].iter_mut().for_each(|v| *v = T::zero());
        for (i, est) in ests.iter().enumerate() {
            let target = ((bits >> i) & 1) as usize;
            for (acc, &v) in sums[target].iter_mut().zip(est.samples(0).iter()) {
                *acc += v;
            }
        }
        let mut total = 0.0;
        for j in 0..2 {
            let est = Waveform::from_mono(mixtures[j].sample_rate, sums[j].clone());
            total += si_snr_loss(&est, &mixtures[j])?;
        }
        let value = total / 2.0;
        if value < best_value {
            best_value = value;
            best_assign = (0..m).map(|i| ((bits >> i) & 1) as usize).collect();
        }
    }

    Ok(LossValue { value: best_value, per_pair: None, permutation: best_assign })
}
