//! Small dense linear algebra.
//!
//! State dimensions here are tiny (a handful of rows), so everything is a
//! row-major `Vec` with LU solves; no external matrix crate is pulled in.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Build from a row-major slice; `data.len()` must equal `rows * cols`.
    pub fn from_rows(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Matrix {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Row-major view of the underlying storage.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let v = out.get(i, j) + a * rhs.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        let mut out = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            let mut acc = T::zero();
            for j in 0..self.cols {
                acc = acc + self.get(i, j) * x[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Entrywise `self + factor * other`.
    pub fn add_scaled(&self, other: &Matrix<T>, factor: T) -> Matrix<T> {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| *a + factor * *b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Transpose.
    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Submatrix with the given row and column indices (0-based), in order.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Matrix<T> {
        let mut out = Matrix::zeros(row_idx.len(), col_idx.len());
        for (i, &r) in row_idx.iter().enumerate() {
            for (j, &c) in col_idx.iter().enumerate() {
                out.set(i, j, self.get(r, c));
            }
        }
        out
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Operator infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.rows {
            let mut row = T::zero();
            for j in 0..self.cols {
                row = row + self.get(i, j).abs();
            }
            if row > best {
                best = row;
            }
        }
        best
    }

    /// Operator 1-norm (max absolute column sum).
    pub fn norm_one(&self) -> T {
        let mut best = T::zero();
        for j in 0..self.cols {
            let mut col = T::zero();
            for i in 0..self.rows {
                col = col + self.get(i, j).abs();
            }
            if col > best {
                best = col;
            }
        }
        best
    }
}

/// Vector infinity norm; the companion vector norm to [`Matrix::norm_inf`].
pub fn vec_norm_inf<T: Scalar>(x: &[T]) -> T {
    x.iter()
        .fold(T::zero(), |acc, v| if v.abs() > acc { v.abs() } else { acc })
}

/// Euclidean norm, used by the optimizer line search.
pub fn vec_norm_two<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt()
}

/// Dot product.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// LU factorization with partial pivoting, `P A = L U` packed in place.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    /// Singular flag: a pivot underflowed to zero.
    singular: bool,
}

impl<T: Scalar> Lu<T> {
    /// Factor a square matrix.
    pub fn new(a: &Matrix<T>) -> Self {
        assert_eq!(a.rows(), a.cols(), "LU needs a square matrix");
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;

        for k in 0..n {
            let mut piv = k;
            let mut best = lu.get(k, k).abs();
            for r in (k + 1)..n {
                let v = lu.get(r, k).abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == T::zero() {
                singular = true;
                continue;
            }
            if piv != k {
                for c in 0..n {
                    let tmp = lu.get(k, c);
                    lu.set(k, c, lu.get(piv, c));
                    lu.set(piv, c, tmp);
                }
                perm.swap(k, piv);
            }
            let pivot = lu.get(k, k);
            for r in (k + 1)..n {
                let factor = lu.get(r, k) / pivot;
                lu.set(r, k, factor);
                for c in (k + 1)..n {
                    let v = lu.get(r, c) - factor * lu.get(k, c);
                    lu.set(r, c, v);
                }
            }
        }

        Lu { lu, perm, singular }
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if self.singular {
            return Err(Error::SingularShootingJacobian { cond: f64::INFINITY });
        }
        let n = self.lu.rows();
        assert_eq!(b.len(), n, "solve rhs length mismatch");
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        // Forward substitution with unit lower triangle.
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc = acc - self.lu.get(i, j) * x[j];
            }
            x[i] = acc;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc = acc - self.lu.get(i, j) * x[j];
            }
            x[i] = acc / self.lu.get(i, i);
        }
        Ok(x)
    }

    /// Inverse via `n` unit-vector solves. Fine at these dimensions.
    pub fn inverse(&self) -> Result<Matrix<T>> {
        let n = self.lu.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = self.solve(&e)?;
            e[j] = T::zero();
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        Ok(inv)
    }
}

/// 1-norm condition number `||A||_1 ||A^-1||_1`; infinite when singular.
pub fn cond_one<T: Scalar>(a: &Matrix<T>) -> f64 {
    if a.rows() == 0 {
        return 0.0;
    }
    let lu = Lu::new(a);
    if lu.is_singular() {
        return f64::INFINITY;
    }
    match lu.inverse() {
        Ok(inv) => (a.norm_one() * inv.norm_one()).to_f64_lossy(),
        Err(_) => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_solves_known_system() {
        // [2 1; 1 3] x = [3, 5] has x = [4/5, 7/5].
        let a = Matrix::from_rows(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = Lu::new(&a).solve(&[3.0, 5.0]).unwrap();
        assert_relative_eq!(x[0], 0.8, max_relative = 1e-14);
        assert_relative_eq!(x[1], 1.4, max_relative = 1e-14);
    }

    #[test]
    fn lu_pivots_on_zero_diagonal() {
        let a = Matrix::from_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let x = Lu::new(&a).solve(&[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn lu_flags_singular() {
        let a = Matrix::from_rows(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(Lu::new(&a).is_singular());
        assert!(cond_one(&a).is_infinite());
    }

    #[test]
    fn inverse_matches_hand_computation() {
        // inv([4 7; 2 6]) = [0.6 -0.7; -0.2 0.4]
        let a = Matrix::from_rows(2, 2, &[4.0, 7.0, 2.0, 6.0]);
        let inv = Lu::new(&a).inverse().unwrap();
        for (got, want) in inv.as_slice().iter().zip([0.6, -0.7, -0.2, 0.4]) {
            assert_relative_eq!(*got, want, max_relative = 1e-14);
        }
    }

    #[test]
    fn three_by_three_solve() {
        let a = Matrix::from_rows(3, 3, &[1.0, 2.0, 0.0, 3.0, 1.0, 1.0, 0.0, 1.0, 2.0]);
        let want = [1.0, -2.0, 3.0];
        let b = a.matvec(&want);
        let x = Lu::new(&a).solve(&b).unwrap();
        for (got, want) in x.iter().zip(want) {
            assert_relative_eq!(*got, want, max_relative = 1e-13);
        }
    }

    #[test]
    fn norms() {
        let a = Matrix::from_rows(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(a.norm_inf(), 7.0);
        assert_eq!(a.norm_one(), 6.0);
        assert_eq!(vec_norm_inf(&[1.0, -5.0, 2.0]), 5.0);
        assert_relative_eq!(vec_norm_two(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn submatrix_picks_rows_and_cols() {
        let a = Matrix::from_rows(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let s = a.submatrix(&[0, 2], &[1]);
        assert_eq!(s.as_slice(), &[2.0, 8.0]);
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Matrix::from_rows(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = a.transpose();
        let p = a.matmul(&b);
        assert_eq!(p.get(0, 0), 14.0);
        assert_eq!(p.get(0, 1), 32.0);
        assert_eq!(p.get(1, 1), 77.0);
    }

    #[test]
    fn condition_of_identity_is_one() {
        let i = Matrix::<f64>::identity(4);
        assert_relative_eq!(cond_one(&i), 1.0);
    }
}
