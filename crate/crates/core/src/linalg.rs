//! Small dense complex matrices and the Hermitian Gram-system solver used by
//! the zero-forcing combiner.

use crate::scalar::Scalar;
use num_complex::Complex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
}

/// Column-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given vectors (all of equal length).
    pub fn from_columns(columns: &[Vec<Complex<T>>]) -> Result<Self, LinalgError> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for col in columns {
            if col.len() != rows {
                return Err(LinalgError::DimensionMismatch {
                    expected: format!("column length {rows}"),
                    got: format!("column length {}", col.len()),
                });
            }
            data.extend_from_slice(col);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, c: usize) -> &[Complex<T>] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// `self^H * other`.
    pub fn adjoint_mul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "adjoint_mul row mismatch");
        Self::from_fn(self.cols, other.cols, |i, j| {
            dot_conj(self.column(i), other.column(j))
        })
    }

    /// `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "mul inner dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other[(k, j)];
                if b.re == T::zero() && b.im == T::zero() {
                    continue;
                }
                for i in 0..self.rows {
                    let a = self[(i, k)];
                    out[(i, j)] += a * b;
                }
            }
        }
        out
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|c| self.column(c).iter().map(|z| z.norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Largest entry magnitude of `self - I`.
    pub fn max_abs_deviation_from_identity(&self) -> T {
        let mut worst = T::zero();
        for c in 0..self.cols {
            for r in 0..self.rows {
                let target = if r == c { T::one() } else { T::zero() };
                let z = self[(r, c)] - Complex::new(target, T::zero());
                worst = worst.max(z.norm());
            }
        }
        worst
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[c * self.rows + r]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[c * self.rows + r]
    }
}

/// `sum_i conj(a_i) * b_i`
pub fn dot_conj<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Lower-triangular Cholesky factor `L` of a Hermitian positive-definite
/// matrix, `A = L L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    factor: CMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &CMatrix<T>) -> Result<Self, LinalgError> {
        let n = a.rows();
        if a.cols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", a.rows(), a.cols()),
            });
        }
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite {
                    column: j,
                    pivot: d.as_f64(),
                });
            }
            let ljj = d.sqrt();
            l[(j, j)] = Complex::new(ljj, T::zero());
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { factor: l })
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex<T>]) {
        let l = &self.factor;
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)].re;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * b[k];
            }
            b[i] = s / l[(i, i)].re;
        }
    }

    pub fn inverse(&self) -> CMatrix<T> {
        let n = self.dim();
        let mut inv = CMatrix::identity(n);
        for c in 0..n {
            let start = c * n;
            self.solve_in_place(&mut inv.data[start..start + n]);
        }
        inv
    }
}

/// Reciprocal 1-norm condition number `1 / (||A||_1 ||A^-1||_1)` from an
/// explicit inverse.
pub fn reciprocal_condition<T: Scalar>(a: &CMatrix<T>, inverse: &CMatrix<T>) -> T {
    let denom = a.norm_one() * inverse.norm_one();
    if denom > T::zero() && denom.is_finite() {
        T::one() / denom
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn cholesky_inverse_of_hermitian() {
        let a = CMatrix::from_fn(3, 3, |i, j| match (i, j) {
            (0, 0) => c(4.0, 0.0),
            (1, 1) => c(5.0, 0.0),
            (2, 2) => c(3.0, 0.0),
            (0, 1) => c(1.0, -1.0),
            (1, 0) => c(1.0, 1.0),
            (1, 2) => c(0.5, 0.25),
            (2, 1) => c(0.5, -0.25),
            _ => c(0.0, 0.0),
        });
        let chol = Cholesky::new(&a).unwrap();
        let inv = chol.inverse();
        let prod = a.mul(&inv);
        assert!(prod.max_abs_deviation_from_identity() < 1e-14);
        let rc = reciprocal_condition(&a, &inv);
        assert!(rc > 0.0 && rc <= 1.0);
    }

    #[test]
    fn singular_matrix_rejected() {
        let v = [c(1.0, 0.5), c(-0.5, 2.0)];
        let a = CMatrix::from_fn(2, 2, |i, j| v[i] * v[j].conj());
        match Cholesky::new(&a) {
            Err(LinalgError::NotPositiveDefinite { .. }) => {}
            Ok(ch) => {
                let inv = ch.inverse();
                assert!(reciprocal_condition(&a, &inv) < 1e-10);
            }
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn adjoint_mul_matches_definition() {
        let a = CMatrix::from_fn(3, 2, |i, j| c(i as f64 + 1.0, j as f64 - 0.5));
        let g = a.adjoint_mul(&a);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = c(0.0, 0.0);
                for r in 0..3 {
                    s += a[(r, i)].conj() * a[(r, j)];
                }
                assert!((g[(i, j)] - s).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn from_columns_rejects_ragged() {
        let cols = vec![vec![c(1.0, 0.0)], vec![c(1.0, 0.0), c(2.0, 0.0)]];
        assert!(CMatrix::from_columns(&cols).is_err());
    }
}
