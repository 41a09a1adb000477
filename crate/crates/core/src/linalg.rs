//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::error::{Error, Result};

/// Eigenpairs sorted by descending eigenvalue. `vectors` is row-major `n x n`
/// with eigenvector `k` in column `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub sweeps: usize,
    /// Final off-diagonal Frobenius norm relative to the matrix norm.
    pub relative_off_norm: f64,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + k]).collect()
    }
}

const MAX_SWEEPS: usize = 100;

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * a[i * n + j] * a[i * n + j];
        }
    }
    s.sqrt()
}

/// Decomposes a symmetric matrix, iterating until the off-diagonal norm is
/// below `tol` times the Frobenius norm of the input.
pub fn symmetric_eigen(matrix: &[f64], n: usize, tol: f64) -> Result<SymmetricEigen> {
    if matrix.len() != n * n {
        return Err(Error::InvalidShape(format!("expected {n}x{n} entries, got {}", matrix.len())));
    }
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (matrix[i * n + j], matrix[j * n + i]);
            if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                return Err(Error::InvalidShape("matrix is not symmetric".into()));
            }
        }
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = tol * norm;

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && off_norm(&a, n) > target {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let relative_off_norm = if norm > 0.0 { off_norm(&a, n) / norm } else { 0.0 };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&k| a[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        // largest-magnitude entry positive
        let (mut best, mut sign) = (0.0, 1.0);
        for i in 0..n {
            let x = v[i * n + k];
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        for i in 0..n {
            vectors[i * n + col] = sign * v[i * n + k];
        }
    }
    Ok(SymmetricEigen {
        n,
        values,
        vectors,
        sweeps,
        relative_off_norm,
    })
}

/// Solves `A x = b` for symmetric positive-definite `A` (row-major `n x n`).
/// Returns `None` when `A` is not numerically positive definite.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn diagonal_matrix() {
        let m = [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        let e = symmetric_eigen(&m, 3, 1e-12).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vector(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vector(1), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = [2.0, 1.0, 1.0, 2.0];
        let e = symmetric_eigen(&m, 2, 1e-14).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vector(0);
        assert_abs_diff_eq!(v0[0], h, epsilon = 1e-14);
        assert_abs_diff_eq!(v0[1], h, epsilon = 1e-14);
    }

    #[test]
    fn cholesky_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, 2, &[2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(x[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-15);
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(symmetric_eigen(&[1.0, 2.0, 3.0, 4.0], 2, 1e-12).is_err());
        assert!(symmetric_eigen(&[1.0, 2.0, 3.0], 2, 1e-12).is_err());
    }

    proptest! {
        #[test]
        fn reconstructs(raw in prop::collection::vec(-10.0f64..10.0, 36)) {
            let n = 6;
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = raw[i * n + j] + raw[j * n + i];
                }
            }
            let e = symmetric_eigen(&m, n, 1e-13).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let r: f64 = (0..n).map(|k| e.vectors[i * n + k] * e.values[k] * e.vectors[j * n + k]).sum();
                    prop_assert!((r - m[i * n + j]).abs() < 1e-9);
                    let dot: f64 = (0..n).map(|k| e.vectors[k * n + i] * e.vectors[k * n + j]).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - expected).abs() < 1e-12);
                }
            }
            for w in e.values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
