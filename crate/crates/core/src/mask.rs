//! Oracle time-frequency masks computed from known source spectra, and mask
//! application to a mixture spectrum.

use ndarray::Array2;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::stft::ComplexSpectrogram;

/// Denominator guard used by every mask formula.
pub const MASK_EPS: f64 = 1e-8;

/// Default magnitude bound for IAM/PSM.
pub const DEFAULT_CLIP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Ideal binary mask: 1 at bins where the source dominates.
    Ibm,
    /// Ideal ratio mask: magnitude share among sources.
    Irm,
    /// Ideal amplitude mask: |S|/|Y|, clipped.
    Iam,
    /// Phase-sensitive mask: |S|/|Y| · cos(phase difference), clipped.
    Psm,
}

impl std::fmt::Display for MaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MaskKind::Ibm => "ibm",
            MaskKind::Irm => "irm",
            MaskKind::Iam => "iam",
            MaskKind::Psm => "psm",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for MaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ibm" => Ok(MaskKind::Ibm),
            "irm" => Ok(MaskKind::Irm),
            "iam" => Ok(MaskKind::Iam),
            "psm" => Ok(MaskKind::Psm),
            other => Err(format!("unknown mask kind {other:?} (expected ibm|irm|iam|psm)")),
        }
    }
}

/// Real mask over frames x bins with a kind-dependent value range.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFreqMask<T> {
    pub values: Array2<T>,
    pub kind: MaskKind,
    pub clip: T,
}

impl<T: Scalar> TimeFreqMask<T> {
    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.values.shape()[1]
    }

    /// `clamp(1 - m, 0, 1)`: the complement used as a noise mask.
    pub fn complement(&self) -> TimeFreqMask<T> {
        TimeFreqMask {
            values: self.values.mapv(|v| (T::one() - v).max(T::zero()).min(T::one())),
            kind: self.kind,
            clip: self.clip,
        }
    }
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least one source")]
    NoSources,
}

fn check_single_channel_same_shape<T: Scalar>(
    sources: &[ComplexSpectrogram<T>],
    mixture: &ComplexSpectrogram<T>,
) -> Result<(usize, usize), MaskError> {
    if sources.is_empty() {
        return Err(MaskError::NoSources);
    }
    let t = mixture.frames();
    let f = mixture.bins();
    if mixture.channels() != 1 {
        return Err(MaskError::ShapeMismatch(format!(
            "mixture must be single-channel, got {} channels",
            mixture.channels()
        )));
    }
    for (i, s) in sources.iter().enumerate() {
        if s.channels() != 1 {
            return Err(MaskError::ShapeMismatch(format!(
                "source {i} must be single-channel, got {} channels",
                s.channels()
            )));
        }
        if s.frames() != t || s.bins() != f {
            return Err(MaskError::ShapeMismatch(format!(
                "source {i} is {}x{}, mixture is {t}x{f}",
                s.frames(),
                s.bins()
            )));
        }
    }
    Ok((t, f))
}

/// Ideal masks for each source given the mixture, all single-channel.
pub fn compute_oracle_masks<T: Scalar>(
    sources: &[ComplexSpectrogram<T>],
    mixture: &ComplexSpectrogram<T>,
    kind: MaskKind,
    clip: T,
) -> Result<Vec<TimeFreqMask<T>>, MaskError> {
    let (t, f) = check_single_channel_same_shape(sources, mixture)?;
    let eps = T::from_f64_c(MASK_EPS);
    let n = sources.len();

    let mut masks: Vec<Array2<T>> = (0..n).map(|_| Array2::zeros((t, f))).collect();
    for ti in 0..t {
        for fi in 0..f {
            let mags: Vec<T> = sources.iter().map(|s| s.values[(ti, fi, 0)].norm()).collect();
            match kind {
                MaskKind::Ibm => {
                    // Ties go to the lowest index so exactly one mask is 1.
                    let mut best = 0usize;
                    for (i, &m) in mags.iter().enumerate().skip(1) {
                        if m > mags[best] {
                            best = i;
                        }
                    }
                    masks[best][(ti, fi)] = T::one();
                }
                MaskKind::Irm => {
                    let total = mags.iter().copied().fold(T::zero(), |a, b| a + b) + eps;
                    for (i, &m) in mags.iter().enumerate() {
                        masks[i][(ti, fi)] = m / total;
                    }
                }
                MaskKind::Iam => {
                    let ymag = mixture.values[(ti, fi, 0)].norm();
                    for (i, &m) in mags.iter().enumerate() {
                        masks[i][(ti, fi)] = (m / (ymag + eps)).min(clip);
                    }
                }
                MaskKind::Psm => {
                    let y = mixture.values[(ti, fi, 0)];
                    let ymag = y.norm();
                    for (i, s) in sources.iter().enumerate() {
                        let sv = s.values[(ti, fi, 0)];
                        // |S|/(|Y|+eps) * cos(angle(Y) - angle(S)) computed
                        // without trigonometry: Re(Y * conj(S)) = |Y||S|cos(dphi).
                        let v = if ymag <= T::zero() {
                            T::zero()
                        } else {
                            let re = y.re * sv.re + y.im * sv.im;
                            re / (ymag * (ymag + eps))
                        };
                        masks[i][(ti, fi)] = v.max(-clip).min(clip);
                    }
                }
            }
        }
    }

    Ok(masks
        .into_iter()
        .map(|values| TimeFreqMask { values, kind, clip })
        .collect())
}

/// Element-wise product of mask and spectrum; the mask is broadcast over
/// channels for a multichannel mixture.
pub fn apply_mask<T: Scalar>(
    mixture: &ComplexSpectrogram<T>,
    mask: &TimeFreqMask<T>,
) -> Result<ComplexSpectrogram<T>, MaskError> {
    if mixture.frames() != mask.frames() || mixture.bins() != mask.bins() {
        return Err(MaskError::ShapeMismatch(format!(
            "mask is {}x{}, spectrogram is {}x{}",
            mask.frames(),
            mask.bins(),
            mixture.frames(),
            mixture.bins()
        )));
    }
    let mut out = mixture.clone();
    for t in 0..out.frames() {
        for f in 0..out.bins() {
            let m = mask.values[(t, f)];
            for c in 0..out.channels() {
                let v = out.values[(t, f, c)];
                out.values[(t, f, c)] = num_complex::Complex::new(v.re * m, v.im * m);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use ndarray::Array3;
    use num_complex::Complex;

    fn spec_from_bins(values: Vec<Complex<f64>>) -> ComplexSpectrogram<f64> {
        let f = values.len();
        ComplexSpectrogram {
            values: Array3::from_shape_vec((1, f, 1), values).unwrap(),
            config: StftConfig::default(),
            sample_rate: 16_000,
            original_length: 512,
        }
    }

    #[test]
    fn ibm_and_irm_two_sources() {
        let s1 = spec_from_bins(vec![Complex::new(3.0, 0.0)]);
        let s2 = spec_from_bins(vec![Complex::new(0.0, 1.0)]);
        let y = spec_from_bins(vec![Complex::new(3.0, 1.0)]);
        let ibm = compute_oracle_masks(&[s1.clone(), s2.clone()], &y, MaskKind::Ibm, 10.0).unwrap();
        assert_eq!(ibm[0].values[(0, 0)], 1.0);
        assert_eq!(ibm[1].values[(0, 0)], 0.0);
        let irm = compute_oracle_masks(&[s1, s2], &y, MaskKind::Irm, 10.0).unwrap();
        assert!((irm[0].values[(0, 0)] - 0.75).abs() < 1e-7);
        assert!((irm[1].values[(0, 0)] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn ibm_tie_goes_to_lowest_index() {
        let s1 = spec_from_bins(vec![Complex::new(0.0, 2.0)]);
        let s2 = spec_from_bins(vec![Complex::new(2.0, 0.0)]);
        let y = spec_from_bins(vec![Complex::new(2.0, 2.0)]);
        let ibm = compute_oracle_masks(&[s1, s2], &y, MaskKind::Ibm, 10.0).unwrap();
        assert_eq!(ibm[0].values[(0, 0)], 1.0);
        assert_eq!(ibm[1].values[(0, 0)], 0.0);
    }

    #[test]
    fn iam_half() {
        let s = spec_from_bins(vec![Complex::new(2.0, 0.0)]);
        let y = spec_from_bins(vec![Complex::new(0.0, 4.0)]);
        let m = compute_oracle_masks(&[s], &y, MaskKind::Iam, 10.0).unwrap();
        assert!((m[0].values[(0, 0)] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn iam_clips() {
        let s = spec_from_bins(vec![Complex::new(1.0, 0.0)]);
        let y = spec_from_bins(vec![Complex::new(1e-6, 0.0)]);
        let m = compute_oracle_masks(&[s], &y, MaskKind::Iam, 10.0).unwrap();
        assert_eq!(m[0].values[(0, 0)], 10.0);
    }

    #[test]
    fn psm_opposite_phase_is_minus_one() {
        let s = spec_from_bins(vec![Complex::new(1.0, 0.0)]);
        let y = spec_from_bins(vec![Complex::new(-1.0, 0.0)]);
        let m = compute_oracle_masks(&[s], &y, MaskKind::Psm, 10.0).unwrap();
        assert!((m[0].values[(0, 0)] - (-1.0)).abs() < 1e-7);
    }

    #[test]
    fn psm_matches_trig_form_on_random_bins() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let n = 64;
        let sv: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(next(), next())).collect();
        let yv: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(next(), next())).collect();
        let s = spec_from_bins(sv.clone());
        let y = spec_from_bins(yv.clone());
        let m = compute_oracle_masks(&[s], &y, MaskKind::Psm, 10.0).unwrap();
        for i in 0..n {
            let expect = sv[i].norm() / (yv[i].norm() + MASK_EPS) * (yv[i].arg() - sv[i].arg()).cos();
            let expect = expect.clamp(-10.0, 10.0);
            assert!((m[0].values[(0, i)] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn psm_at_most_iam_when_nonnegative() {
        let mut state = 42u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let n = 256;
        let sv: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(next(), next())).collect();
        let yv: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(next(), next())).collect();
        let s = spec_from_bins(sv);
        let y = spec_from_bins(yv);
        let psm = compute_oracle_masks(std::slice::from_ref(&s), &y, MaskKind::Psm, 10.0).unwrap();
        let iam = compute_oracle_masks(&[s], &y, MaskKind::Iam, 10.0).unwrap();
        for i in 0..n {
            let p = psm[0].values[(0, i)];
            if p >= 0.0 {
                assert!(p <= iam[0].values[(0, i)] + 1e-12);
            }
        }
    }

    #[test]
    fn irm_sums_to_at_most_one_and_ibm_to_exactly_one() {
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let n = 128;
        let srcs: Vec<ComplexSpectrogram<f64>> = (0..3)
            .map(|_| spec_from_bins((0..n).map(|_| Complex::new(next(), next())).collect()))
            .collect();
        let y = spec_from_bins((0..n).map(|_| Complex::new(next(), next())).collect());
        let irm = compute_oracle_masks(&srcs, &y, MaskKind::Irm, 10.0).unwrap();
        let ibm = compute_oracle_masks(&srcs, &y, MaskKind::Ibm, 10.0).unwrap();
        for i in 0..n {
            let irm_sum: f64 = irm.iter().map(|m| m.values[(0, i)]).sum();
            assert!(irm_sum <= 1.0 + 1e-6);
            let ibm_sum: f64 = ibm.iter().map(|m| m.values[(0, i)]).sum();
            assert_eq!(ibm_sum, 1.0);
        }
    }

    #[test]
    fn apply_identity_and_zero() {
        let y = spec_from_bins(vec![Complex::new(1.0, 2.0), Complex::new(-0.5, 0.25)]);
        let ones = TimeFreqMask {
            values: Array2::from_elem((1, 2), 1.0),
            kind: MaskKind::Irm,
            clip: 10.0,
        };
        assert_eq!(apply_mask(&y, &ones).unwrap().values, y.values);
        let zeros = TimeFreqMask {
            values: Array2::from_elem((1, 2), 0.0),
            kind: MaskKind::Irm,
            clip: 10.0,
        };
        let out = apply_mask(&y, &zeros).unwrap();
        assert!(out.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn apply_broadcasts_over_channels() {
        let values = Array3::from_shape_fn((2, 3, 2), |(t, f, c)| {
            Complex::new((t + f) as f64, c as f64)
        });
        let spec = ComplexSpectrogram {
            values,
            config: StftConfig::default(),
            sample_rate: 16_000,
            original_length: 100,
        };
        let mask = TimeFreqMask {
            values: Array2::from_shape_fn((2, 3), |(t, f)| 0.5 * (t as f64 + 1.0) + f as f64),
            kind: MaskKind::Iam,
            clip: 10.0,
        };
        let out = apply_mask(&spec, &mask).unwrap();
        for t in 0..2 {
            for f in 0..3 {
                for c in 0..2 {
                    let expect = spec.values[(t, f, c)] * mask.values[(t, f)];
                    assert_eq!(out.values[(t, f, c)], expect);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let s = spec_from_bins(vec![Complex::new(1.0, 0.0)]);
        let y = spec_from_bins(vec![Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)]);
        assert!(matches!(
            compute_oracle_masks(&[s], &y, MaskKind::Irm, 10.0),
            Err(MaskError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn complement_clamps_to_unit_interval() {
        let m = TimeFreqMask {
            values: Array2::from_shape_vec((1, 3), vec![-0.5, 0.25, 4.0]).unwrap(),
            kind: MaskKind::Psm,
            clip: 10.0,
        };
        let c = m.complement();
        assert_eq!(c.values[(0, 0)], 1.0);
        assert_eq!(c.values[(0, 1)], 0.75);
        assert_eq!(c.values[(0, 2)], 0.0);
    }
}
