//! Small dense complex Hermitian solves shared by the beamformers and WPE.
//!
//! Everything here targets matrices of side C or C*(K+1) with C <= 16, so a
//! plain Cholesky factorization is plenty.

use ndarray::Array2;
use num_complex::Complex;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular or not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("non-finite matrix entry")]
    NonFinite,
}

pub(crate) fn trace_re<T: Scalar>(a: &Array2<Complex<T>>) -> T {
    (0..a.nrows()).map(|i| a[(i, i)].re).fold(T::zero(), |acc, v| acc + v)
}

/// Copy of `a` with `1e-6 * trace/n + 1e-8` added to the diagonal.
pub(crate) fn load_diagonal<T: Scalar>(a: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    let n = a.nrows();
    let eps = T::from_f64_c(1e-6) * trace_re(a) / T::from_f64_c(n as f64) + T::from_f64_c(1e-8);
    let mut out = a.clone();
    for i in 0..n {
        out[(i, i)] = Complex::new(out[(i, i)].re + eps, out[(i, i)].im);
    }
    out
}

/// Lower-triangular L with A = L L^H; A must be Hermitian positive definite.
pub(crate) fn cholesky<T: Scalar>(a: &Array2<Complex<T>>) -> Result<Array2<Complex<T>>, LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix required");
    let mut l: Array2<Complex<T>> = Array2::zeros((n, n));
    for j in 0..n {
        let mut diag = a[(j, j)].re;
        for k in 0..j {
            diag -= l[(j, k)].norm_sqr();
        }
        if !diag.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        if diag <= T::zero() {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: diag.to_f64_c() });
        }
        let d = diag.sqrt();
        l[(j, j)] = Complex::new(d, T::zero());
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solve A x = b given the Cholesky factor L of A.
pub(crate) fn cholesky_solve_vec<T: Scalar>(
    l: &Array2<Complex<T>>,
    b: &[Complex<T>],
) -> Vec<Complex<T>> {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    // Forward: L y = b.
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)].re;
    }
    // Backward: L^H x = y.
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)].conj() * y[k];
        }
        y[i] = s / l[(i, i)].re;
    }
    y
}

/// Solve A X = B for Hermitian positive-definite A and matrix B.
pub(crate) fn solve_hermitian<T: Scalar>(
    a: &Array2<Complex<T>>,
    b: &Array2<Complex<T>>,
) -> Result<Array2<Complex<T>>, LinalgError> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let m = b.ncols();
    let mut x = Array2::zeros((n, m));
    let mut col = vec![Complex::new(T::zero(), T::zero()); n];
    for j in 0..m {
        for i in 0..n {
            col[i] = b[(i, j)];
        }
        let sol = cholesky_solve_vec(&l, &col);
        for i in 0..n {
            x[(i, j)] = sol[i];
        }
    }
    Ok(x)
}

/// Solve A x = b for Hermitian positive-definite A.
pub(crate) fn solve_hermitian_vec<T: Scalar>(
    a: &Array2<Complex<T>>,
    b: &[Complex<T>],
) -> Result<Vec<Complex<T>>, LinalgError> {
    let l = cholesky(a)?;
    Ok(cholesky_solve_vec(&l, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul<T: Scalar>(a: &Array2<Complex<T>>, b: &Array2<Complex<T>>) -> Array2<Complex<T>> {
        let (n, k) = (a.nrows(), a.ncols());
        let m = b.ncols();
        debug_assert_eq!(k, b.nrows());
        let mut out = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                let mut s = Complex::new(T::zero(), T::zero());
                for p in 0..k {
                    s += a[(i, p)] * b[(p, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn random_hpd(n: usize, seed: u64) -> Array2<Complex<f64>> {
        let mut s = seed;
        let b = Array2::from_shape_fn((n, n), |_| Complex::new(lcg(&mut s), lcg(&mut s)));
        // B B^H + I is Hermitian positive definite.
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex::new(0.0, 0.0);
                for k in 0..n {
                    acc += b[(i, k)] * b[(j, k)].conj();
                }
                a[(i, j)] = acc;
            }
            a[(i, i)] += Complex::new(1.0, 0.0);
        }
        a
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = random_hpd(5, 11);
        let l = cholesky(&a).unwrap();
        let mut lh = Array2::zeros((5, 5));
        for i in 0..5 {
            for j in 0..5 {
                lh[(i, j)] = l[(j, i)].conj();
            }
        }
        let rec = matmul(&l, &lh);
        for i in 0..5 {
            for j in 0..5 {
                assert!((rec[(i, j)] - a[(i, j)]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn solve_residual_is_small() {
        let a = random_hpd(6, 3);
        let mut s = 99u64;
        let b: Vec<Complex<f64>> = (0..6).map(|_| Complex::new(lcg(&mut s), lcg(&mut s))).collect();
        let x = solve_hermitian_vec(&a, &b).unwrap();
        for i in 0..6 {
            let mut acc = Complex::new(0.0, 0.0);
            for j in 0..6 {
                acc += a[(i, j)] * x[j];
            }
            assert!((acc - b[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn matrix_rhs_solve() {
        let a = random_hpd(4, 8);
        let mut s = 5u64;
        let b = Array2::from_shape_fn((4, 3), |_| Complex::new(lcg(&mut s), lcg(&mut s)));
        let x = solve_hermitian(&a, &b).unwrap();
        let ax = matmul(&a, &x);
        for i in 0..4 {
            for j in 0..3 {
                assert!((ax[(i, j)] - b[(i, j)]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = Array2::from_shape_fn((2, 2), |_| Complex::new(1.0, 0.0));
        assert!(matches!(cholesky(&a), Err(LinalgError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn loading_follows_trace() {
        let a = Array2::from_shape_fn((2, 2), |(i, j)| {
            if i == j { Complex::new(4.0f64, 0.0) } else { Complex::new(0.0, 0.0) }
        });
        let loaded = load_diagonal(&a);
        let expect = 4.0 + 1e-6 * 8.0 / 2.0 + 1e-8;
        assert!((loaded[(0, 0)].re - expect).abs() < 1e-15);
    }
}
