//! Small dense linear algebra: row-major matrices, Cholesky with jitter
//! escalation, and Householder least squares.
//!
//! Matrices here are at most a few hundred rows, so everything is plain
//! loops over a `Vec`.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{what}: matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite {
        what: String,
        pivot: usize,
        value: f64,
    },
    #[error("{what}: factorization failed even with jitter {max_jitter:e}")]
    JitterExhausted { what: String, max_jitter: f64 },
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },
}

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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape {
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equal-length rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::Shape {
                    expected: format!("row of length {cols}"),
                    found: format!("row of length {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[T]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows_iter().map(<[T]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[T]) -> Result<(), LinalgError> {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(LinalgError::Shape {
                expected: format!("row of length {}", self.cols),
                found: format!("row of length {}", row.len()),
            });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Shape {
                expected: format!("{} rows", self.cols),
                found: format!("{} rows", other.rows),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        self.rows_iter().map(|r| dot(r, v)).collect()
    }

    pub fn add_diagonal(&mut self, d: &[T]) {
        for (i, &x) in d.iter().enumerate() {
            self[(i, i)] = self[(i, i)] + x;
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    // Four independent accumulators break the add latency chain.
    let mut acc = [T::zero(); 4];
    let chunks = n / 4 * 4;
    for (x, y) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        acc[0] = acc[0] + x[0] * y[0];
        acc[1] = acc[1] + x[1] * y[1];
        acc[2] = acc[2] + x[2] * y[2];
        acc[3] = acc[3] + x[3] * y[3];
    }
    let mut tail = T::zero();
    for (&x, &y) in a[chunks..].iter().zip(&b[chunks..]) {
        tail = tail + x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lower-triangular Cholesky factor `L` with `A + jitter * I = L Lᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
    jitter: T,
}

impl<T: Scalar> Cholesky<T> {
    /// Factorizes a symmetric positive-definite matrix as given.
    pub fn factor(a: &Matrix<T>, what: &str) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::Shape {
                expected: "square matrix".into(),
                found: format!("{}x{}", n, a.ncols()),
            });
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite {
                    what: what.to_string(),
                    pivot: j,
                    value: d.to_f64().unwrap_or(f64::NAN),
                });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self {
            lower: l,
            jitter: T::zero(),
        })
    }

    /// Adds `jitter * I` starting at `start` and multiplying by ten until the
    /// factorization succeeds or `max` is exceeded.
    pub fn factor_with_jitter(
        a: &Matrix<T>,
        start: T,
        max: T,
        what: &str,
    ) -> Result<Self, LinalgError> {
        let n = a.nrows();
        let ten = T::lit(10.0);
        let mut jitter = start;
        // Tolerate rounding in the escalation ladder.
        let ceiling = max * T::lit(1.000_001);
        while jitter <= ceiling {
            let mut aj = a.clone();
            aj.add_diagonal(&vec![jitter; n]);
            if let Ok(mut c) = Self::factor(&aj, what) {
                c.jitter = jitter;
                return Ok(c);
            }
            jitter = jitter * ten;
        }
        Err(LinalgError::JitterExhausted {
            what: what.to_string(),
            max_jitter: max.as_f64(),
        })
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let l = &self.lower;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = l.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let l = &self.lower;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        x
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<T>() * two
    }

    /// Reconstructs `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        let l = &self.lower;
        Matrix::from_fn(n, n, |i, j| {
            let k = i.min(j) + 1;
            dot(&l.row(i)[..k], &l.row(j)[..k])
        })
    }
}

/// Least-squares solution of `X b ≈ y` by Householder QR with column
/// equilibration. Fails when the numerical rank is below the column count.
pub fn least_squares<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<Vec<T>, LinalgError> {
    let (m, n) = (x.nrows(), x.ncols());
    if y.len() != m {
        return Err(LinalgError::Shape {
            expected: format!("{m} responses"),
            found: format!("{} responses", y.len()),
        });
    }
    if m < n {
        return Err(LinalgError::RankDeficient { rank: m, cols: n });
    }
    // Scale columns to unit norm so that the rank test is scale-free.
    let scales: Vec<T> = (0..n)
        .map(|j| {
            let s = (0..m).map(|i| x[(i, j)] * x[(i, j)]).sum::<T>().sqrt();
            if s > T::zero() {
                s
            } else {
                T::one()
            }
        })
        .collect();
    let mut a = Matrix::from_fn(m, n, |i, j| x[(i, j)] / scales[j]);
    let mut rhs = y.to_vec();
    let mut diag = vec![T::zero(); n];
    for k in 0..n {
        let norm = (k..m).map(|i| a[(i, k)] * a[(i, k)]).sum::<T>().sqrt();
        if norm == T::zero() {
            diag[k] = T::zero();
            continue;
        }
        let alpha = if a[(k, k)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| a[(i, k)]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 > T::zero() {
            let two = T::lit(2.0);
            for j in k..n {
                let s = (k..m).map(|i| v[i - k] * a[(i, j)]).sum::<T>() * two / vnorm2;
                for i in k..m {
                    a[(i, j)] = a[(i, j)] - s * v[i - k];
                }
            }
            let s = (k..m).map(|i| v[i - k] * rhs[i]).sum::<T>() * two / vnorm2;
            for i in k..m {
                rhs[i] = rhs[i] - s * v[i - k];
            }
        }
        diag[k] = a[(k, k)];
    }
    let largest = diag.iter().fold(T::zero(), |acc, d| acc.max(d.abs()));
    let tol = largest * T::epsilon() * T::from_usize_lossy(m.max(n)) * T::lit(10.0);
    let rank = diag.iter().filter(|d| d.abs() > tol).count();
    if rank < n {
        return Err(LinalgError::RankDeficient { rank, cols: n });
    }
    let mut coef = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            s = s - a[(i, j)] * coef[j];
        }
        coef[i] = s / a[(i, i)];
    }
    Ok(coef.into_iter().zip(scales).map(|(c, s)| c / s).collect())
}
