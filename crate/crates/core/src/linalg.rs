//! Small dense matrices, a symmetric eigensolver and the Thomas algorithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from a row-major buffer.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Matrix<T>) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    /// `self · selfᵀ`.
    pub fn gram(&self) -> Self {
        self.matmul(&self.transpose())
    }

    pub fn frobenius_norm(&self) -> T {
        crate::scalar::norm(&self.data)
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        crate::scalar::all_finite(&self.data)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
///
/// Closed form for `n ≤ 2`, cyclic Jacobi rotations otherwise.
pub fn symmetric_eigen_bounds<T: Scalar>(a: &Matrix<T>) -> (T, T) {
    assert_eq!(a.rows(), a.cols(), "eigen bounds need a square matrix");
    match a.rows() {
        0 => (T::zero(), T::zero()),
        1 => (a[(0, 0)], a[(0, 0)]),
        2 => {
            let half = T::lit(0.5);
            let mean = half * (a[(0, 0)] + a[(1, 1)]);
            let diff = half * (a[(0, 0)] - a[(1, 1)]);
            let off = half * (a[(0, 1)] + a[(1, 0)]);
            let r = diff.hypot(off);
            (mean - r, mean + r)
        }
        _ => {
            let ev = jacobi_eigenvalues(a);
            let lo = ev.iter().copied().fold(T::infinity(), T::min);
            let hi = ev.iter().copied().fold(T::neg_infinity(), T::max);
            (lo, hi)
        }
    }
}

fn jacobi_eigenvalues<T: Scalar>(a: &Matrix<T>) -> Vec<T> {
    let n = a.rows();
    // symmetrize so that tiny asymmetries from the caller do not stall the sweep
    let mut m = Matrix::from_fn(n, n, |i, j| T::lit(0.5) * (a[(i, j)] + a[(j, i)]));
    let scale = m.frobenius_norm().max(T::min_positive_value());
    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= T::epsilon() * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

/// Solves a tridiagonal system in place with the Thomas algorithm.
///
/// `lower[i]` couples row `i` to `i-1` (ignored for `i = 0`), `upper[i]` couples
/// row `i` to `i+1` (ignored for the last row). A non-positive or non-finite
/// pivot is reported as [`Error::Ellipticity`] with the offending row.
pub fn solve_tridiagonal<T: Scalar>(
    lower: &[T],
    diag: &[T],
    upper: &[T],
    rhs: &mut [T],
    scratch: &mut Vec<T>,
) -> Result<()> {
    let n = rhs.len();
    debug_assert!(lower.len() == n && diag.len() == n && upper.len() == n);
    scratch.clear();
    scratch.resize(n, T::zero());
    let mut pivot = diag[0];
    if !(pivot > T::zero()) {
        return Err(Error::Ellipticity {
            node: 0,
            value: pivot.to_f64_lossy(),
        });
    }
    rhs[0] = rhs[0] / pivot;
    for i in 1..n {
        scratch[i] = upper[i - 1] / pivot;
        pivot = diag[i] - lower[i] * scratch[i];
        if !(pivot > T::zero()) {
            return Err(Error::Ellipticity {
                node: i,
                value: pivot.to_f64_lossy(),
            });
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - scratch[i + 1] * rhs[i + 1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense_solution() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1, 0, 1] -> x = [1, 1, 1]
        let lower = [0.0, -1.0, -1.0];
        let diag = [2.0, 2.0, 2.0];
        let upper = [-1.0, -1.0, 0.0];
        let mut rhs = [1.0, 0.0, 1.0];
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs, &mut Vec::new()).unwrap();
        for v in rhs {
            assert!((v - 1.0_f64).abs() < 1e-14);
        }
    }

    #[test]
    fn tridiagonal_rejects_zero_pivot() {
        let mut rhs = [1.0, 1.0];
        let err = solve_tridiagonal(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &mut rhs, &mut Vec::new());
        assert!(matches!(err, Err(Error::Ellipticity { node: 0, .. })));
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // diag(1, 2, 5) rotated about the z axis
        let (c, s) = (0.6_f64, 0.8_f64);
        let q = Matrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let d = Matrix::diagonal(&[1.0, 2.0, 5.0]);
        let a = q.matmul(&d).matmul(&q.transpose());
        let (lo, hi) = symmetric_eigen_bounds(&a);
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_row_slice(2, 2, &[2.0_f64, 1.0, 1.0, 2.0]);
        let (lo, hi) = symmetric_eigen_bounds(&a);
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
    }
}
