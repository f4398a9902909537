//! Dense symmetric linear algebra used by the GP core.
//!
//! Self-contained on purpose: the only O(n^3) primitive this crate needs is
//! a Cholesky factorisation with solves, and a blocked implementation on top
//! of `ndarray`'s GEMM runs at several GFLOPS single-threaded, which is all
//! the reference GP core requires.

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};

/// Block size for the right-looking factorisation. The trailing update is a
/// GEMM of width `BLOCK`, which dominates the flop count.
const BLOCK: usize = 96;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Array2<f64>,
}

/// Factor a symmetric positive definite matrix, reading the lower triangle.
///
/// Fails with the 1-based order of the first non-positive pivot, mirroring
/// the LAPACK convention.
pub fn cholesky(a: &Array2<f64>) -> Result<CholeskyFactor> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("cholesky: matrix not square".into()));
    }
    let mut m = a.clone();
    let mut k = 0usize;
    while k < n {
        let kb = BLOCK.min(n - k);
        // Unblocked factorisation of the diagonal block.
        for j in k..k + kb {
            let mut d = m[(j, j)];
            for p in k..j {
                d -= m[(j, p)] * m[(j, p)];
            }
            if !(d > 0.0) {
                return Err(Error::Conditioning(format!(
                    "cholesky: leading minor of order {} is not positive definite",
                    j + 1
                )));
            }
            let d = d.sqrt();
            m[(j, j)] = d;
            for i in j + 1..k + kb {
                let mut v = m[(i, j)];
                for p in k..j {
                    v -= m[(i, p)] * m[(j, p)];
                }
                m[(i, j)] = v / d;
            }
        }
        if k + kb < n {
            // Panel solve: A21 <- A21 * L11^-T.
            let l11 = m.slice(s![k..k + kb, k..k + kb]).to_owned();
            {
                let mut a21 = m.slice_mut(s![k + kb.., k..k + kb]);
                for j in 0..kb {
                    let d = l11[(j, j)];
                    for i in 0..a21.nrows() {
                        let mut v = a21[(i, j)];
                        for p in 0..j {
                            v -= a21[(i, p)] * l11[(j, p)];
                        }
                        a21[(i, j)] = v / d;
                    }
                }
            }
            // Trailing update: A22 <- A22 - A21 A21^T.
            let a21 = m.slice(s![k + kb.., k..k + kb]).to_owned();
            let update = a21.dot(&a21.t());
            let mut a22 = m.slice_mut(s![k + kb.., k + kb..]);
            a22 -= &update;
        }
        k += kb;
    }
    // Zero the strict upper triangle so the factor is usable as-is.
    for i in 0..n {
        for j in i + 1..n {
            m[(i, j)] = 0.0;
        }
    }
    Ok(CholeskyFactor { lower: m })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    /// log |A| = 2 * sum(log L_ii).
    pub fn log_det(&self) -> f64 {
        self.lower.diag().iter().map(|d| d.ln()).sum::<f64>() * 2.0
    }

    /// Solve L x = b by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut v = x[i];
            for j in 0..i {
                v -= self.lower[(i, j)] * x[j];
            }
            x[i] = v / self.lower[(i, i)];
        }
        x
    }

    /// Solve L^T x = b by backward substitution.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut v = x[i];
            for j in i + 1..n {
                v -= self.lower[(j, i)] * x[j];
            }
            x[i] = v / self.lower[(i, i)];
        }
        x
    }

    /// Solve A x = b via the two triangular solves.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// b^T A^{-1} b, the Gaussian quadratic form.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let z = self.solve_lower(b);
        z.iter().map(|v| v * v).sum()
    }

    /// tr(A^{-1} B) column by column.
    pub fn trace_solve(&self, b: &Array2<f64>) -> f64 {
        let n = self.dim();
        let mut tr = 0.0;
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            tr += x[j];
        }
        tr
    }

    /// Largest eigenvalue of A^{-1} (i.e. 1/lambda_min(A)) by power iteration.
    pub fn inverse_spectral_norm(&self) -> f64 {
        let n = self.dim();
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + (i as f64 * 0.7).sin() * 0.01)
            .collect();
        let mut lambda = 0.0;
        for _ in 0..200 {
            let y = self.solve(&x);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next: Vec<f64> = y.iter().map(|v| v / norm).collect();
            let prev = lambda;
            lambda = norm;
            x = next;
            if (lambda - prev).abs() <= 1e-10 * lambda.abs() {
                break;
            }
        }
        lambda
    }
}

/// Frobenius norm of the difference of two equally sized matrices.
pub fn frobenius_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

/// Multiply the factor's L by a vector (used when sampling).
pub fn lower_times(l: &CholeskyFactor, z: &Array1<f64>) -> Array1<f64> {
    l.lower.dot(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spd(n: usize) -> Array2<f64> {
        let mut a = Array2::<f64>::eye(n);
        for i in 0..n {
            for j in 0..n {
                let d = (i as f64 - j as f64) / 7.0;
                a[(i, j)] += 2.0 * (-d * d).exp();
            }
        }
        a
    }

    #[test]
    fn factor_matches_reconstruction() {
        for n in [1usize, 3, 17, 97, 200] {
            let a = spd(n);
            let f = cholesky(&a).unwrap();
            let r = f.lower().dot(&f.lower().t());
            for i in 0..n {
                for j in 0..n {
                    assert!((r[(i, j)] - a[(i, j)]).abs() < 1e-9, "n={n} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn solve_and_logdet_small() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let f = cholesky(&a).unwrap();
        // |A| = 8, A^{-1} [1, 1] = [1/8, 2/8]
        assert!((f.log_det() - 8.0_f64.ln()).abs() < 1e-12);
        let x = f.solve(&[1.0, 1.0]);
        assert!((x[0] - 0.125).abs() < 1e-12);
        assert!((x[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn inverse_spectral_norm_is_reciprocal_min_eigenvalue() {
        // Diagonal matrix: eigenvalues are the entries.
        let a = Array2::from_diag(&array![4.0, 0.25, 1.0]);
        let f = cholesky(&a).unwrap();
        assert!((f.inverse_spectral_norm() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn trace_solve_identity() {
        let a = spd(13);
        let f = cholesky(&a).unwrap();
        assert!((f.trace_solve(&a) - 13.0).abs() < 1e-8);
    }
}
