//! Dense row-major matrices and the handful of kernels the solvers need.
//!
//! Designs are stored `p × n` (one row per covariate, one column per sample).
//! Small symmetric positive definite systems are handed to `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                out.data[j * self.rows + i] = v;
            }
        }
        out
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `out = A x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        par::fill(out, self.cols, |i| dot(self.row(i), x));
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out = Aᵀ y`. Zero entries of `y` are skipped.
    pub fn tr_mul_vec_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        let active: Vec<usize> = (0..self.rows).filter(|&i| y[i] != 0.0).collect();
        self.tr_mul_rows_into(&active, |k| y[active[k]], out);
    }

    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.tr_mul_vec_into(y, &mut out);
        out
    }

    /// `out = Σ_k coef(k) · row(idx[k])`, accumulated in the order of `idx`.
    pub fn tr_mul_rows_into<F>(&self, idx: &[usize], coef: F, out: &mut [f64])
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        debug_assert_eq!(out.len(), self.cols);
        const CHUNK: usize = 512;
        let coefs: Vec<f64> = (0..idx.len()).map(coef).collect();
        par::for_chunks(out, CHUNK, CHUNK * idx.len(), |c, piece| {
            piece.iter_mut().for_each(|v| *v = 0.0);
            let start = c * CHUNK;
            for (k, &i) in idx.iter().enumerate() {
                let a = coefs[k];
                let row = &self.row(i)[start..start + piece.len()];
                for (o, &x) in piece.iter_mut().zip(row) {
                    *o += a * x;
                }
            }
        });
    }

    /// `out[k] = row(idx[k]) · x`.
    pub fn mul_rows_into(&self, idx: &[usize], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), idx.len());
        par::fill(out, self.cols, |k| dot(self.row(idx[k]), x));
    }

    /// `A_D A_Dᵀ` for the row subset `idx`.
    pub fn gram_rows(&self, idx: &[usize]) -> DenseMatrix {
        let r = idx.len();
        let mut g = DenseMatrix::zeros(r, r);
        let rows: Vec<Vec<f64>> = par::map(r, |a| {
            (0..=a)
                .map(|b| dot(self.row(idx[a]), self.row(idx[b])))
                .collect()
        });
        for (a, vals) in rows.into_iter().enumerate() {
            for (b, v) in vals.into_iter().enumerate() {
                g.set(a, b, v);
                g.set(b, a, v);
            }
        }
        g
    }

    /// `A Aᵀ` through a blocked matrix product.
    pub fn gram(&self) -> DenseMatrix {
        let a = self.to_nalgebra();
        let g = &a * a.transpose();
        DenseMatrix::from_nalgebra(&g)
    }

    /// `Aᵀ A`.
    pub fn gram_tr(&self) -> DenseMatrix {
        let a = self.to_nalgebra();
        let g = a.transpose() * &a;
        DenseMatrix::from_nalgebra(&g)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        Self::from_fn(rows, cols, |i, j| m[(i, j)])
    }

    /// Submatrix `G[idx, idx]` of a square matrix as an nalgebra matrix.
    pub fn principal_submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        let r = idx.len();
        DMatrix::from_fn(r, r, |a, b| self.get(idx[a], idx[b]))
    }
}

/// Dot product with a fixed four-lane accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power iteration.
///
/// Stops when the Rayleigh quotient changes by less than `tol` relative,
/// or after `max_iter` sweeps.
pub fn power_iteration_sym(g: &DenseMatrix, tol: f64, max_iter: usize) -> f64 {
    let n = g.rows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start with no zero components
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        g.mul_vec_into(&v, &mut w);
        let next = dot(&v, &w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        let done = (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda
}

/// Spectral norm of a rectangular matrix, via power iteration on the smaller Gram.
pub fn spectral_norm(a: &DenseMatrix, tol: f64, max_iter: usize) -> f64 {
    if a.rows() == 0 || a.cols() == 0 {
        return 0.0;
    }
    let g = if a.rows() <= a.cols() {
        a.gram()
    } else {
        a.gram_tr()
    };
    power_iteration_sym(&g, tol, max_iter).max(0.0).sqrt()
}

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        Cholesky::new(m)
            .map(|chol| Self { chol })
            .ok_or_else(|| Error::FactorizationFail(format!("{dim}x{dim} matrix not positive definite")))
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        self.chol.solve(&b).as_slice().to_vec()
    }
}
