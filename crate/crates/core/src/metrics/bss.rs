//! BSS-eval style SDR/SIR/SAR with allowed per-reference distortion filters.
//!
//! Every estimate is decomposed against the span of time-shifted references
//! (shifts 0..L-1, working in the zero-padded space of length N+L-1):
//! the paired reference's span gives the target, the full span adds the
//! interference part, and whatever remains is artifact. Projections are
//! solved through Gram systems built from FFT cross-correlations rather
//! than materializing the shifted basis.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{db_ratio, mono_f64, MetricError};
use crate::audio::Waveform;
use crate::objective::for_each_permutation;
use crate::scalar::Scalar;

pub const DEFAULT_FILTER_LEN: usize = 512;
const PERM_LIMIT: usize = 6;
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BssEvalResult {
    /// Per-estimate signal-to-distortion ratio in dB, est i scored against
    /// reference `permutation[i]`.
    pub sdr: Vec<f64>,
    pub sir: Vec<f64>,
    pub sar: Vec<f64>,
    pub permutation: Vec<usize>,
}

struct RealCholesky {
    l: Vec<f64>,
    n: usize,
}

impl RealCholesky {
    fn factor(mut a: Vec<f64>, n: usize) -> Result<Self, MetricError> {
        for j in 0..n {
            let mut diag = a[j * n + j];
            for k in 0..j {
                diag -= a[j * n + k] * a[j * n + k];
            }
            if !diag.is_finite() || diag <= 0.0 {
                return Err(MetricError::InvalidParameter(format!(
                    "projection Gram matrix is not positive definite at pivot {j}"
                )));
            }
            let d = diag.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut v = a[i * n + j];
                for k in 0..j {
                    v -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = v / d;
            }
        }
        Ok(Self { l: a, n })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.l[i * n + k] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.l[k * n + i] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        x
    }
}

/// Correlation engine: spectra of the zero-padded references plus an FFT
/// sized so lags up to +-L never wrap.
struct Correlator {
    size: usize,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ref_spectra: Vec<Vec<Complex<f64>>>,
}

impl Correlator {
    fn new(refs: &[Vec<f64>], filter_len: usize) -> Self {
        let n = refs[0].len();
        let size = (n + filter_len + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let ref_spectra = refs
            .iter()
            .map(|r| {
                let mut buf = vec![Complex::new(0.0, 0.0); size];
                for (b, v) in buf.iter_mut().zip(r) {
                    b.re = *v;
                }
                fwd.process(&mut buf);
                buf
            })
            .collect();
        Self { size, fwd, inv, ref_spectra }
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (b, v) in buf.iter_mut().zip(x) {
            b.re = *v;
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// Lag products z(d) = sum_m a(m) b(m+d) for d in -(max_lag-1)..max_lag,
    /// returned as a closure-friendly buffer indexed by `lag`.
    fn lags(&self, a: &[Complex<f64>], b: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> =
            a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
        self.inv.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
        buf
    }

    fn lag(buf: &[Complex<f64>], d: isize) -> f64 {
        let n = buf.len() as isize;
        buf[((d % n + n) % n) as usize].re
    }
}

fn matvec(g: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| (0..n).map(|j| g[i * n + j] * x[j]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Decomposition pieces for one estimate/reference pairing.
struct Projection {
    target_energy: f64,
    /// ||est - target||^2
    distortion: f64,
    /// Coefficients of the target projection in the paired block.
    coeffs: Vec<f64>,
}

pub fn bss_eval<T: Scalar>(
    ests: &[Waveform<T>],
    refs: &[Waveform<T>],
    filter_len: usize,
) -> Result<BssEvalResult, MetricError> {
    if ests.len() != refs.len() {
        return Err(MetricError::SourceCountMismatch(ests.len(), refs.len()));
    }
    let sources = refs.len();
    if sources == 0 {
        return Err(MetricError::InvalidParameter("empty source list".into()));
    }
    if sources > PERM_LIMIT {
        return Err(MetricError::TooManySources { sources, limit: PERM_LIMIT });
    }
    if filter_len == 0 {
        return Err(MetricError::InvalidParameter("filter_len must be >= 1".into()));
    }
    let n = refs[0].len();
    for w in refs.iter().chain(ests.iter()) {
        if w.len() != n {
            return Err(MetricError::LengthMismatch(w.len(), n));
        }
    }
    let l = filter_len;
    let refs: Vec<Vec<f64>> = refs.iter().map(mono_f64).collect();
    let ests: Vec<Vec<f64>> = ests.iter().map(mono_f64).collect();

    let corr = Correlator::new(&refs, l);

    // Full Gram over all shifted references, ridge-regularized, plus the
    // per-reference diagonal blocks factored separately for target fits.
    let dim = sources * l;
    let mut gram = vec![0.0f64; dim * dim];
    for j in 0..sources {
        for k in j..sources {
            let z = corr.lags(&corr.ref_spectra[j], &corr.ref_spectra[k]);
            for t1 in 0..l {
                for t2 in 0..l {
                    let v = Correlator::lag(&z, t1 as isize - t2 as isize);
                    gram[(j * l + t1) * dim + (k * l + t2)] = v;
                    gram[(k * l + t2) * dim + (j * l + t1)] = v;
                }
            }
        }
    }
    let mut full = gram.clone();
    for i in 0..dim {
        full[i * dim + i] += RIDGE;
    }
    let full_chol = RealCholesky::factor(full, dim)?;

    let mut block_chols = Vec::with_capacity(sources);
    for j in 0..sources {
        let mut block = vec![0.0f64; l * l];
        for t1 in 0..l {
            for t2 in 0..l {
                block[t1 * l + t2] = gram[(j * l + t1) * dim + (j * l + t2)];
            }
        }
        for i in 0..l {
            block[i * l + i] += RIDGE;
        }
        block_chols.push(RealCholesky::factor(block, l)?);
    }

    // Shift correlations of each estimate against each reference, and the
    // single-reference projections they induce.
    let mut pair_rhs = vec![vec![Vec::new(); sources]; sources];
    let mut pair_proj: Vec<Vec<Projection>> = Vec::with_capacity(sources);
    let mut sdr_matrix = vec![vec![0.0f64; sources]; sources];
    for (i, est) in ests.iter().enumerate() {
        let e_spec = corr.spectrum(est);
        let e_energy: f64 = est.iter().map(|v| v * v).sum();
        let mut row = Vec::with_capacity(sources);
        for j in 0..sources {
            let z = corr.lags(&corr.ref_spectra[j], &e_spec);
            let rhs: Vec<f64> = (0..l).map(|t| Correlator::lag(&z, t as isize)).collect();
            let c = block_chols[j].solve(&rhs);
            let mut block = vec![0.0f64; l * l];
            for t1 in 0..l {
                for t2 in 0..l {
                    block[t1 * l + t2] = gram[(j * l + t1) * dim + (j * l + t2)];
                }
            }
            let gc = matvec(&block, l, &c);
            let target = dot(&c, &gc);
            let distortion = (e_energy - 2.0 * dot(&c, &rhs) + target).max(0.0);
            sdr_matrix[i][j] = db_ratio(target, distortion);
            pair_rhs[i][j] = rhs;
            row.push(Projection { target_energy: target, distortion, coeffs: c });
        }
        pair_proj.push(row);
    }

    // Pick the permutation with the best mean SDR; ties keep the first in
    // lexicographic order.
    let mut best_perm: Option<Vec<usize>> = None;
    let mut best_score = f64::NEG_INFINITY;
    for_each_permutation(sources, |perm: &[usize]| {
        let score: f64 = perm.iter().enumerate().map(|(i, &j)| sdr_matrix[i][j]).sum();
        if score > best_score {
            best_score = score;
            best_perm = Some(perm.to_vec());
        }
    });
    let perm = best_perm.expect("at least one permutation");

    let mut sdr = Vec::with_capacity(sources);
    let mut sir = Vec::with_capacity(sources);
    let mut sar = Vec::with_capacity(sources);
    for (i, est) in ests.iter().enumerate() {
        let j = perm[i];
        let proj = &pair_proj[i][j];
        let e_energy: f64 = est.iter().map(|v| v * v).sum();

        // Projection onto the span of every reference's shifts.
        let mut rhs_full = Vec::with_capacity(dim);
        for k in 0..sources {
            rhs_full.extend_from_slice(&pair_rhs[i][k]);
        }
        let c_full = full_chol.solve(&rhs_full);
        let gc_full = matvec(&gram, dim, &c_full);
        let all_energy = dot(&c_full, &gc_full);
        let artifact = (e_energy - 2.0 * dot(&c_full, &rhs_full) + all_energy).max(0.0);

        // <P_all, target> restricted to the paired block.
        let cross = dot(&proj.coeffs, &gc_full[j * l..(j + 1) * l]);
        let interference = (all_energy - 2.0 * cross + proj.target_energy).max(0.0);

        sdr.push(db_ratio(proj.target_energy, proj.distortion));
        sir.push(db_ratio(proj.target_energy, interference));
        sar.push(db_ratio(all_energy, artifact));
    }

    Ok(BssEvalResult { sdr, sir, sar, permutation: perm })
}
