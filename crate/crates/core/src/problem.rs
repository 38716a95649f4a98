use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

/// Largest `p` for which the full `p × p` Gram matrix is cached.
const GRAM_CACHE_MAX_P: usize = 4096;

/// Linear problem `Ỹ ≈ X̃ᵀ β` left after the kernel transform.
///
/// `xt` is `p × n`. Both `xt` and `yt` have already been divided by `scale`,
/// so a penalty level `λ` on the original data corresponds to `λ / scale²` here.
#[derive(Debug)]
pub struct TransformedProblem {
    xt: DenseMatrix,
    yt: Vec<f64>,
    scale: f64,
    gram: OnceLock<Option<DenseMatrix>>,
}

impl Clone for TransformedProblem {
    fn clone(&self) -> Self {
        Self {
            xt: self.xt.clone(),
            yt: self.yt.clone(),
            scale: self.scale,
            gram: OnceLock::new(),
        }
    }
}

impl TransformedProblem {
    /// Wraps already-prepared data without rescaling.
    pub fn new(xt: DenseMatrix, yt: Vec<f64>) -> Result<Self> {
        Self::with_scale(xt, yt, 1.0)
    }

    pub fn with_scale(xt: DenseMatrix, yt: Vec<f64>, scale: f64) -> Result<Self> {
        if xt.cols() != yt.len() {
            return Err(Error::Dimension(format!(
                "design has {} samples but response has {}",
                xt.cols(),
                yt.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!("scale = {scale}")));
        }
        if !xt.is_finite() || yt.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entries in transformed data".into()));
        }
        Ok(Self {
            xt,
            yt,
            scale,
            gram: OnceLock::new(),
        })
    }

    /// Divides design and response by `max(1, ‖X̃‖₂)`.
    ///
    /// The norm comes from power iteration (relative tolerance 1e-10, at most
    /// 5000 sweeps) on the smaller of the two Gram matrices.
    pub fn normalized(xt: DenseMatrix, yt: Vec<f64>) -> Result<Self> {
        let p = xt.rows();
        let wide = p <= xt.cols();
        let mut gram = if wide { xt.gram() } else { xt.gram_tr() };
        let norm = linalg::power_iteration_sym(&gram, 1e-10, 5000).max(0.0).sqrt();
        let scale = norm.max(1.0);
        let mut xt = xt;
        let mut yt = yt;
        if scale > 1.0 {
            xt.scale_in_place(1.0 / scale);
            yt.iter_mut().for_each(|v| *v /= scale);
            gram.scale_in_place(1.0 / (scale * scale));
        }
        let out = Self::with_scale(xt, yt, scale)?;
        if wide && p <= GRAM_CACHE_MAX_P {
            let _ = out.gram.set(Some(gram));
        }
        Ok(out)
    }

    /// Sample count `n`.
    #[inline]
    pub fn n(&self) -> usize {
        self.xt.cols()
    }

    /// Covariate count `p`.
    #[inline]
    pub fn p(&self) -> usize {
        self.xt.rows()
    }

    #[inline]
    pub fn xt(&self) -> &DenseMatrix {
        &self.xt
    }

    #[inline]
    pub fn yt(&self) -> &[f64] {
        &self.yt
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Converts a penalty level on the original scale to this problem's scale.
    pub fn internal_lambda(&self, lambda: f64) -> f64 {
        lambda / (self.scale * self.scale)
    }

    /// `X̃ u` (length `p`).
    pub fn xt_mul(&self, u: &[f64]) -> Vec<f64> {
        self.xt.mul_vec(u)
    }

    /// `X̃ᵀ β` (length `n`).
    pub fn xt_tr_mul(&self, beta: &[f64]) -> Vec<f64> {
        self.xt.tr_mul_vec(beta)
    }

    /// `X̃ Ỹ`.
    pub fn xty(&self) -> Vec<f64> {
        self.xt.mul_vec(&self.yt)
    }

    /// `Ỹ − X̃ᵀ β`.
    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let fit = self.xt_tr_mul(beta);
        self.yt.iter().zip(&fit).map(|(y, f)| y - f).collect()
    }

    /// Full `X̃ X̃ᵀ`, computed once on first use; `None` when `p` is too large to cache.
    pub fn gram(&self) -> Option<&DenseMatrix> {
        self.gram
            .get_or_init(|| (self.p() <= GRAM_CACHE_MAX_P).then(|| self.xt.gram()))
            .as_ref()
    }

    /// `X̃_D X̃_Dᵀ` for the row subset `idx`, from the cache when available.
    pub fn gram_rows(&self, idx: &[usize]) -> nalgebra::DMatrix<f64> {
        match self.gram() {
            Some(g) => g.principal_submatrix(idx),
            None => self.xt.gram_rows(idx).to_nalgebra(),
        }
    }

    /// Order-sensitive fingerprint of the numeric content.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.xt.rows().hash(&mut h);
        self.xt.cols().hash(&mut h);
        for v in self.xt.data().iter().chain(&self.yt) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}
