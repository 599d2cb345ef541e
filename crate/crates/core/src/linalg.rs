//! Dense row-major matrices and the Cholesky factorization used for exact
//! Gaussian sampling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{c, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Real> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Degenerate(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { S::one() } else { S::zero() })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn frobenius(&self) -> S {
        self.data.iter().map(|&x| x * x).sum::<S>().sqrt()
    }

    pub fn max_abs_diag(&self) -> S {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i).abs()).fold(S::zero(), S::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols, "dimension mismatch in mul_vec");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Product `self * rhs`, rows computed in parallel.
    pub fn matmul(&self, rhs: &Matrix<S>) -> Matrix<S> {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in matmul");
        let m = rhs.cols;
        let mut out = vec![S::zero(); self.rows * m];
        out.par_chunks_mut(m.max(1)).enumerate().for_each(|(i, orow)| {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == S::zero() {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(rhs.row(k)) {
                    *o = *o + a * b;
                }
            }
        });
        Matrix { rows: self.rows, cols: m, data: out }
    }

    /// Sum of elementwise products, `tr(self^T other)`.
    pub fn frobenius_dot(&self, other: &Matrix<S>) -> S {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        dot(&self.data, &other.data)
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (S::zero(), S::zero(), S::zero(), S::zero());
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        s0 = s0 + a[i] * b[i];
        s1 = s1 + a[i + 1] * b[i + 1];
        s2 = s2 + a[i + 2] * b[i + 2];
        s3 = s3 + a[i + 3] * b[i + 3];
    }
    let mut tail = S::zero();
    for i in 4 * chunks..n {
        tail = tail + a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// Lower-triangular Cholesky factor of a symmetric matrix; fails on a
/// non-positive pivot.
pub fn cholesky<S: Real>(a: &Matrix<S>) -> Result<Matrix<S>> {
    cholesky_shifted(a, S::zero()).map_err(|_| Error::NotPositiveDefinite { jitter: 0.0 })
}

fn cholesky_shifted<S: Real>(a: &Matrix<S>, shift: S) -> std::result::Result<Matrix<S>, usize> {
    let n = a.rows;
    assert_eq!(n, a.cols, "cholesky needs a square matrix");
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (li, lj) = (&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
            let s = dot(li, lj);
            if i == j {
                let d = a.get(i, i) + shift - s;
                if !(d > S::zero()) || !d.is_finite() {
                    return Err(i);
                }
                l.data[i * n + i] = d.sqrt();
            } else {
                let v = (a.get(i, j) - s) / l.data[j * n + j];
                l.data[i * n + j] = v;
            }
        }
    }
    Ok(l)
}

/// Cholesky with escalating diagonal jitter `0, 1e-12, ..., 1e-8` times the
/// largest diagonal entry. Returns the factor and the jitter that was added.
pub fn cholesky_jittered<S: Real>(a: &Matrix<S>) -> Result<(Matrix<S>, S)> {
    let scale = a.max_abs_diag();
    let mut shifts = vec![S::zero()];
    shifts.extend([1e-12, 1e-11, 1e-10, 1e-9, 1e-8].iter().map(|&r| c::<S>(r) * scale));
    for &shift in &shifts {
        if let Ok(l) = cholesky_shifted(a, shift) {
            if shift > S::zero() {
                log::warn!("cholesky needed diagonal jitter {:.3e}", shift.to_f64_lossy());
            }
            return Ok((l, shift));
        }
    }
    Err(Error::NotPositiveDefinite { jitter: shifts[shifts.len() - 1].to_f64_lossy() })
}

/// `L z` for a lower-triangular `L`.
pub fn lower_mul_vec<S: Real>(l: &Matrix<S>, z: &[S]) -> Vec<S> {
    assert_eq!(z.len(), l.cols);
    (0..l.rows).map(|i| dot(&l.row(i)[..=i.min(l.cols - 1)], &z[..=i.min(l.cols - 1)])).collect()
}
