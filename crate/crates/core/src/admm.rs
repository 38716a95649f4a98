//! ADMM baseline for the same dual problem solved by [`crate::ssnal`].
//!
//! Each iteration does one linear solve with the fixed matrix `I + σX̃ᵀX̃`,
//! a box projection for `v` and a multiplier step of length `τσ`.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::problem::TransformedProblem;
use crate::prox::BoxRadii;
use crate::ssnal::{check_radii, finish, kkt_residual, DualState, SolveReport};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmOptions {
    pub sigma: f64,
    /// Read `sigma` on the scale of the data before normalization.
    pub sigma_original_scale: bool,
    /// Dual step length, in `(0, (1 + √5)/2)`.
    pub tau: f64,
    pub res_tol: f64,
    pub max_iters: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            sigma_original_scale: true,
            tau: 1.618,
            res_tol: 1e-6,
            max_iters: 2000,
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<()> {
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("admm sigma = {}", self.sigma)));
        }
        if !(self.tau > 0.0 && self.tau < golden) {
            return Err(Error::InvalidInput(format!("admm tau = {} outside (0, {golden:.6})", self.tau)));
        }
        if !(self.res_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidInput("admm tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    /// `σ` as used on `prob`.
    pub fn effective_sigma(&self, prob: &TransformedProblem) -> f64 {
        if self.sigma_original_scale {
            self.sigma * prob.scale() * prob.scale()
        } else {
            self.sigma
        }
    }
}

#[derive(Clone, Debug)]
enum Factor {
    /// `X̃ = 0`: the matrix is the identity.
    Identity,
    /// Cholesky of the `p × p` matrix `I/σ + X̃X̃ᵀ`, used through Woodbury.
    Woodbury(SpdFactor),
    /// Cholesky of the `n × n` matrix `I + σX̃ᵀX̃`.
    Dense(SpdFactor),
}

/// Factorization of `I + σX̃ᵀX̃`, tagged with the `σ` it was built for.
#[derive(Clone, Debug)]
pub struct AdmmFactorization {
    sigma: f64,
    factor: Factor,
}

impl AdmmFactorization {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn uses_woodbury(&self) -> bool {
        matches!(self.factor, Factor::Woodbury(_))
    }

    /// `(I + σX̃ᵀX̃)⁻¹ rhs`; `sigma` must be the one the handle was built with.
    pub fn solve(&self, prob: &TransformedProblem, sigma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        if sigma != self.sigma {
            return Err(Error::StaleFactorization {
                built: self.sigma,
                requested: sigma,
            });
        }
        if rhs.len() != prob.n() {
            return Err(Error::Dimension(format!(
                "rhs has {} entries, expected {}",
                rhs.len(),
                prob.n()
            )));
        }
        Ok(match &self.factor {
            Factor::Identity => rhs.to_vec(),
            Factor::Dense(f) => f.solve(rhs),
            Factor::Woodbury(f) => {
                let s = f.solve(&prob.xt_mul(rhs));
                let back = prob.xt_tr_mul(&s);
                rhs.iter().zip(&back).map(|(r, b)| r - b).collect()
            }
        })
    }
}

/// Factorizes `I + σX̃ᵀX̃`, through the smaller `p × p` complement when `p < n`.
pub fn admm_factorize(prob: &TransformedProblem, sigma: f64) -> Result<AdmmFactorization> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma = {sigma}")));
    }
    let xt = prob.xt();
    let factor = if xt.data().iter().all(|v| *v == 0.0) {
        Factor::Identity
    } else if prob.p() < prob.n() {
        let mut m = match prob.gram() {
            Some(g) => g.to_nalgebra(),
            None => xt.gram().to_nalgebra(),
        };
        for k in 0..prob.p() {
            m[(k, k)] += 1.0 / sigma;
        }
        Factor::Woodbury(SpdFactor::new(m)?)
    } else {
        let mut m = xt.gram_tr().to_nalgebra();
        m.scale_mut(sigma);
        for k in 0..prob.n() {
            m[(k, k)] += 1.0;
        }
        Factor::Dense(SpdFactor::new(m)?)
    };
    Ok(AdmmFactorization { sigma, factor })
}

/// ADMM from `(u, v, β) = 0` until the KKT residual drops below `res_tol`.
///
/// Hitting `max_iters` returns a report with `converged = false`.
pub fn admm_solve(prob: &TransformedProblem, radii: &BoxRadii, opts: &AdmmOptions) -> Result<SolveReport> {
    opts.validate()?;
    check_radii(prob, radii)?;
    let start = Instant::now();
    let sigma = opts.effective_sigma(prob);
    let fac = admm_factorize(prob, sigma)?;
    let r = radii.as_slice();
    let mut state = DualState::zeros(prob.n(), prob.p(), sigma);
    let mut res = kkt_residual(&state.beta, prob, radii);
    let mut converged = res < opts.res_tol;
    let mut iters = 0;
    while !converged && iters < opts.max_iters {
        // u = (I + σX̃ᵀX̃)⁻¹ (X̃ᵀ(β − σv) − Ỹ)
        let shifted: Vec<f64> = state.beta.iter().zip(&state.v).map(|(b, v)| b - sigma * v).collect();
        let rhs: Vec<f64> = prob
            .xt_tr_mul(&shifted)
            .iter()
            .zip(prob.yt())
            .map(|(a, y)| a - y)
            .collect();
        state.u = fac.solve(prob, sigma, &rhs)?;
        let xu = prob.xt_mul(&state.u);
        for j in 0..state.v.len() {
            state.v[j] = (state.beta[j] / sigma - xu[j]).max(-r[j]).min(r[j]);
        }
        for j in 0..state.beta.len() {
            state.beta[j] -= opts.tau * sigma * (xu[j] + state.v[j]);
        }
        iters += 1;
        res = kkt_residual(&state.beta, prob, radii);
        if iters % 100 == 0 {
            log::debug!("admm {iters}: res {res:.3e}");
        }
        converged = res < opts.res_tol;
    }
    state.outer_iter = iters;
    log::debug!("admm finished after {iters} iterations, res {res:.3e}");
    finish(prob, radii, state, res, iters, start, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_inf, DenseMatrix};

    fn dense_solve(prob: &TransformedProblem, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let n = prob.n();
        let xtx = prob.xt().gram_tr();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| sigma * xtx.get(i, j) + if i == j { 1.0 } else { 0.0 });
        let lu = m.lu();
        lu.solve(&nalgebra::DVector::from_column_slice(rhs))
            .unwrap()
            .as_slice()
            .to_vec()
    }

    fn wide(p: usize, n: usize) -> TransformedProblem {
        let xt = DenseMatrix::from_fn(p, n, |i, j| (((i * 13 + j * 7) % 11) as f64 - 5.0) / 9.0);
        TransformedProblem::normalized(xt, (0..n).map(|i| (i as f64).cos()).collect()).unwrap()
    }

    #[test]
    fn zero_design_solves_with_identity() {
        let tp = TransformedProblem::new(DenseMatrix::zeros(2, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let f = admm_factorize(&tp, 0.7).unwrap();
        assert_eq!(f.solve(&tp, 0.7, &[4.0, 5.0, 6.0]).unwrap(), vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn woodbury_matches_dense() {
        let tp = wide(8, 20);
        let f = admm_factorize(&tp, 1.3).unwrap();
        assert!(f.uses_woodbury());
        let rhs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let got = f.solve(&tp, 1.3, &rhs).unwrap();
        let want = dense_solve(&tp, 1.3, &rhs);
        let err: Vec<f64> = got.iter().zip(&want).map(|(a, b)| a - b).collect();
        assert!(norm_inf(&err) < 1e-10);
    }

    #[test]
    fn tall_uses_dense_cholesky() {
        let tp = wide(12, 6);
        let f = admm_factorize(&tp, 2.0).unwrap();
        assert!(!f.uses_woodbury());
        let rhs = vec![1.0, -1.0, 0.5, 0.0, 2.0, 0.3];
        let got = f.solve(&tp, 2.0, &rhs).unwrap();
        let want = dense_solve(&tp, 2.0, &rhs);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn stale_handle_is_rejected() {
        let tp = wide(4, 10);
        let f = admm_factorize(&tp, 1.0).unwrap();
        assert!(matches!(
            f.solve(&tp, 2.0, &[0.0; 10]),
            Err(Error::StaleFactorization { .. })
        ));
    }

    #[test]
    fn stays_at_zero_above_lambda_max() {
        let tp = wide(4, 10);
        let radii = BoxRadii::uniform(4, 1.01 * norm_inf(&tp.xty()));
        let rep = admm_solve(&tp, &radii, &AdmmOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.outer_iters, 0);
        assert!(rep.beta_hat.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn rejects_bad_tau() {
        let opts = AdmmOptions {
            tau: 1.7,
            ..AdmmOptions::default()
        };
        assert!(opts.validate().is_err());
    }
}
