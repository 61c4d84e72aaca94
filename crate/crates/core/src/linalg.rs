//! Small dense symmetric linear algebra.
//!
//! The cyclic Jacobi routine is used for interaction and covariance matrices
//! (dimension at most a few dozen). Large generator spectra go through
//! nalgebra's symmetric eigensolver instead.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Convergence threshold on the off-diagonal Frobenius mass, relative to the
/// full Frobenius norm.
pub const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix stored row-major.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in decreasing order.
    pub values: Vec<f64>,
    /// Column `j` (row-major `n x n`) is the unit eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
    pub n: usize,
}

/// Cyclic Jacobi eigenvalue iteration on a symmetric `n x n` row-major matrix.
pub fn jacobi_eigen(a: &[f64], n: usize) -> SymEigen {
    assert_eq!(a.len(), n * n, "matrix size mismatch");
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob > 0.0 {
        // one extra sweep after reaching the threshold: convergence is
        // quadratic, so this pushes the residual to rounding level
        let mut last = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            if last {
                break;
            }
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[p * n + q] * m[p * n + q];
                }
            }
            if off == 0.0 {
                break;
            }
            last = (2.0 * off).sqrt() <= JACOBI_TOL * frob;
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[p * n + p];
                    let aqq = m[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[k * n + p];
                        let mkq = m[k * n + q];
                        m[k * n + p] = c * mkp - s * mkq;
                        m[k * n + q] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[p * n + k];
                        let mqk = m[q * n + k];
                        m[p * n + k] = c * mpk - s * mqk;
                        m[q * n + k] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    SymEigen { values, vectors, n }
}

/// Largest eigenvalue of a symmetric row-major matrix.
pub fn max_eigenvalue(a: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    jacobi_eigen(a, n).values[0]
}

/// Solve the symmetric positive definite system `h x = g`, adding a growing
/// ridge if the Cholesky factorisation fails.
pub fn solve_spd(h: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    let base = DMatrix::from_row_slice(n, n, h);
    let rhs = DVector::from_column_slice(g);
    let scale = (0..n).map(|i| h[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = base.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return Ok(ch.solve(&rhs).iter().copied().collect());
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
    Err(Error::Numeric("singular Hessian in Newton step".into()))
}

/// Symmetric eigendecomposition through nalgebra, for generator-sized
/// matrices. Values are sorted in decreasing order.
pub fn sym_eigen_large(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(src));
    }
    (values, vecs)
}

/// Ordinary least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonal() {
        let e = jacobi_eigen(&[3.0, 0.0, 0.0, -1.0], 2);
        assert_eq!(e.values, vec![3.0, -1.0]);
    }

    #[test]
    fn jacobi_two_by_two() {
        // eigenvalues of [[2,1],[1,2]] are 3 and 1
        let e = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_reconstructs() {
        let n = 5;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let x = ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0;
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        let e = jacobi_eigen(&a, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += e.vectors[i * n + k] * e.values[k] * e.vectors[j * n + k];
                }
                assert!((s - a[i * n + j]).abs() < 1e-12);
            }
        }
        let (vals, _) = sym_eigen_large(DMatrix::from_row_slice(n, n, &a));
        for (x, y) in vals.iter().zip(&e.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_solve() {
        let x = solve_spd(&[4.0, 1.0, 1.0, 3.0], &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn fit_line() {
        let (s, c) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14);
    }
}
