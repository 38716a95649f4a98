//! Inexact augmented Lagrangian method on the dual problem
//!
//! ```text
//! min_{u, v}  ½‖u‖² + ⟨Ỹ, u⟩ + δ(v | ‖v ./ λω‖∞ ≤ 1)   s.t.  X̃u + v = 0,
//! ```
//!
//! whose multiplier is the primal coefficient vector `β`. Each outer step
//! minimizes the augmented Lagrangian in `u` with [`crate::ssn`], recovers `v`
//! in closed form and updates `β`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, norm_sq};
use crate::problem::TransformedProblem;
use crate::prox::{soft_threshold_weighted, BoxRadii};
use crate::ssn::{ssn_solve, InnerProblem, NewtonConfig, PsiEval, SsnOutcome};

/// Primal-dual iterate of the outer loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub outer_iter: usize,
}

impl DualState {
    /// `(u, v, β) = (0, 0, 0)`.
    pub fn zeros(n: usize, p: usize, sigma: f64) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; p],
            beta: vec![0.0; p],
            sigma,
            outer_iter: 0,
        }
    }
}

/// Summable inner-accuracy sequence `π_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PiSchedule {
    /// `π_k = π₀ / (k + 1)²`.
    InverseSquare { pi0: f64 },
    /// `π_k = π₀ · decayᵏ`, `0 < decay < 1`.
    Geometric { pi0: f64, decay: f64 },
}

impl PiSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            PiSchedule::InverseSquare { pi0 } => pi0 / ((k + 1) as f64).powi(2),
            PiSchedule::Geometric { pi0, decay } => pi0 * decay.powi(k as i32),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub sigma0: f64,
    pub sigma_max: f64,
    pub sigma_growth: f64,
    pub res_tol: f64,
    pub max_outer: usize,
    pub inner: NewtonConfig,
    pub pi_schedule: PiSchedule,
    /// Read `sigma0` and `sigma_max` on the scale of the data before
    /// normalization, i.e. multiply them by `scale²` of the problem.
    pub sigma_original_scale: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            sigma0: 0.01,
            sigma_max: 2.0,
            sigma_growth: 3.0,
            res_tol: 1e-6,
            max_outer: 20,
            inner: NewtonConfig::default(),
            pi_schedule: PiSchedule::InverseSquare { pi0: 1e-2 },
            sigma_original_scale: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("solve options: {what}")));
        if !(self.sigma0 > 0.0 && self.sigma0 <= self.sigma_max && self.sigma_max.is_finite()) {
            return bad("need 0 < sigma0 <= sigma_max < inf");
        }
        if !(self.sigma_growth >= 1.0) {
            return bad("sigma_growth must be at least 1");
        }
        if !(self.res_tol > 0.0) || self.max_outer == 0 {
            return bad("res_tol and max_outer must be positive");
        }
        match self.pi_schedule {
            PiSchedule::InverseSquare { pi0 } if pi0 > 0.0 => {}
            PiSchedule::Geometric { pi0, decay } if pi0 > 0.0 && decay > 0.0 && decay < 1.0 => {}
            _ => return bad("pi schedule must be positive and summable"),
        }
        self.inner.validate()
    }

    /// `(σ₀, σ_max)` as used on `prob`.
    pub fn sigma_range(&self, prob: &TransformedProblem) -> (f64, f64) {
        let f = if self.sigma_original_scale {
            prob.scale() * prob.scale()
        } else {
            1.0
        };
        (self.sigma0 * f, self.sigma_max * f)
    }
}

/// Result of one solve, shared by SSNAL and ADMM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub beta_hat: Vec<f64>,
    /// Relative KKT residual of `beta_hat`.
    pub res: f64,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    pub wall_time_s: f64,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub converged: bool,
    /// Final iterate, usable as a warm start.
    pub state: DualState,
}

impl SolveReport {
    /// `|primal − dual| / (1 + |primal|)`.
    pub fn relative_gap(&self) -> f64 {
        (self.primal_obj - self.dual_obj).abs() / (1.0 + self.primal_obj.abs())
    }

    pub fn support(&self) -> Vec<usize> {
        self.beta_hat
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// `½‖Ỹ − X̃ᵀβ‖² + Σ_j (λω)_j |β_j|`, with `∞ · 0 = 0`.
pub fn primal_objective(beta: &[f64], prob: &TransformedProblem, radii: &BoxRadii) -> f64 {
    let r = prob.residual(beta);
    let penalty: f64 = beta
        .iter()
        .zip(radii.as_slice())
        .map(|(b, w)| if *b == 0.0 { 0.0 } else { w * b.abs() })
        .sum();
    0.5 * norm_sq(&r) + penalty
}

/// `−(½‖u‖² + ⟨Ỹ, u⟩)`; `v` must lie in the box up to 1e-9.
pub fn dual_objective(u: &[f64], v: &[f64], prob: &TransformedProblem, radii: &BoxRadii) -> Result<f64> {
    let excess = v
        .iter()
        .zip(radii.as_slice())
        .map(|(vj, rj)| vj.abs() - rj)
        .fold(f64::NEG_INFINITY, f64::max);
    if excess > 1e-9 {
        return Err(Error::InfeasibleV { excess });
    }
    Ok(-(0.5 * norm_sq(u) + crate::linalg::dot(prob.yt(), u)))
}

/// `v_j = clamp(β_j/σ − (X̃u)_j, −λω_j, λω_j)`.
pub fn recover_v(beta: &[f64], u: &[f64], sigma: f64, radii: &BoxRadii, prob: &TransformedProblem) -> Vec<f64> {
    recover_v_from_xu(beta, &prob.xt_mul(u), sigma, radii)
}

fn recover_v_from_xu(beta: &[f64], xu: &[f64], sigma: f64, radii: &BoxRadii) -> Vec<f64> {
    beta.iter()
        .zip(xu)
        .zip(radii.as_slice())
        .map(|((b, a), r)| (b / sigma - a).max(-r).min(*r))
        .collect()
}

/// `β − σ(X̃u + v)`.
pub fn update_beta(state: &DualState, u_new: &[f64], v_new: &[f64], prob: &TransformedProblem) -> Vec<f64> {
    let xu = prob.xt_mul(u_new);
    state
        .beta
        .iter()
        .zip(xu.iter().zip(v_new))
        .map(|(b, (a, v))| b - state.sigma * (a + v))
        .collect()
}

/// Relative KKT residual
/// `‖β − soft(β − X̃(X̃ᵀβ − Ỹ), λω)‖ / (1 + ‖β‖ + ‖X̃ᵀβ − Ỹ‖)`.
pub fn kkt_residual(beta: &[f64], prob: &TransformedProblem, radii: &BoxRadii) -> f64 {
    let r = prob.residual(beta);
    let grad = prob.xt_mul(&r);
    // β − X̃(X̃ᵀβ − Ỹ) = β + X̃ r
    let step: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b + g).collect();
    let prox = soft_threshold_weighted(&step, radii);
    let num: Vec<f64> = beta.iter().zip(&prox).map(|(b, q)| b - q).collect();
    norm2(&num) / (1.0 + norm2(beta) + norm2(&r))
}

pub(crate) fn check_radii(prob: &TransformedProblem, radii: &BoxRadii) -> Result<()> {
    if radii.len() != prob.p() {
        return Err(Error::Dimension(format!(
            "{} radii for {} covariates",
            radii.len(),
            prob.p()
        )));
    }
    Ok(())
}

pub(crate) fn check_state(prob: &TransformedProblem, s: &DualState) -> Result<()> {
    if s.u.len() != prob.n() || s.v.len() != prob.p() || s.beta.len() != prob.p() {
        return Err(Error::Dimension("warm start does not match problem size".into()));
    }
    Ok(())
}

/// SSNAL from `init` (or from zero), stopping once the KKT residual drops below `res_tol`.
///
/// A warm start whose `β` already meets the tolerance is returned without any
/// outer iteration. Running out of outer iterations is not an error: the
/// report comes back with `converged = false`.
pub fn ssnal_solve(
    prob: &TransformedProblem,
    radii: &BoxRadii,
    opts: &SolveOptions,
    init: Option<&DualState>,
) -> Result<SolveReport> {
    opts.validate()?;
    check_radii(prob, radii)?;
    let start = Instant::now();
    let (sigma0, sigma_max) = opts.sigma_range(prob);
    let mut state = match init {
        Some(s) => {
            check_state(prob, s)?;
            // a warm start from another λ may sit outside the current box
            let v = s
                .v
                .iter()
                .zip(radii.as_slice())
                .map(|(v, r)| v.max(-r).min(*r))
                .collect();
            DualState {
                v,
                sigma: sigma0,
                outer_iter: 0,
                ..s.clone()
            }
        }
        None => DualState::zeros(prob.n(), prob.p(), sigma0),
    };

    let mut res = f64::INFINITY;
    if init.is_some() {
        res = kkt_residual(&state.beta, prob, radii);
        if res < opts.res_tol {
            log::debug!("ssnal: warm start already optimal (res {res:.3e})");
            return finish(prob, radii, state, res, 0, start, true);
        }
    }

    let mut inner_total = 0;
    let mut converged = false;
    for k in 0..opts.max_outer {
        let sigma = state.sigma;
        let inner = InnerProblem::new(prob, &state.beta, sigma, radii)?;
        let tol = (1.0 / sigma).sqrt() * opts.pi_schedule.at(k);
        let out = match ssn_solve(&state.u, &inner, &opts.inner, tol) {
            Ok(out) => out,
            Err(Error::MaxNewtonExceeded { iters, grad_norm, u }) => {
                log::warn!("ssnal {k}: inner solve stopped at {iters} steps, |grad| {grad_norm:.3e}");
                let eval = PsiEval::new(&u, &inner);
                SsnOutcome {
                    u,
                    iters,
                    grad_norm,
                    w: eval.w,
                    xu: eval.xu,
                    value: eval.value,
                }
            }
            Err(e) => return Err(e),
        };
        inner_total += out.iters;
        state.v = recover_v_from_xu(&state.beta, &out.xu, sigma, radii);
        // β − σ(X̃u + v) equals soft(β − σX̃u, σλω), which keeps exact zeros
        state.beta = out.w;
        state.u = out.u;
        state.outer_iter = k + 1;
        res = kkt_residual(&state.beta, prob, radii);
        log::debug!(
            "ssnal {k}: sigma {sigma:.3e}, inner {} (|grad| {:.3e} <= {tol:.3e}), res {res:.3e}",
            out.iters,
            out.grad_norm
        );
        if res < opts.res_tol {
            converged = true;
            break;
        }
        state.sigma = (sigma * opts.sigma_growth).min(sigma_max);
    }
    let outer = state.outer_iter;
    let mut report = finish(prob, radii, state, res, outer, start, converged)?;
    report.total_inner_iters = inner_total;
    Ok(report)
}

pub(crate) fn finish(
    prob: &TransformedProblem,
    radii: &BoxRadii,
    state: DualState,
    res: f64,
    outer_iters: usize,
    start: Instant,
    converged: bool,
) -> Result<SolveReport> {
    let wall_time_s = start.elapsed().as_secs_f64();
    let primal_obj = primal_objective(&state.beta, prob, radii);
    let dual_obj = dual_objective(&state.u, &state.v, prob, radii)?;
    Ok(SolveReport {
        beta_hat: state.beta.clone(),
        res,
        outer_iters,
        total_inner_iters: 0,
        wall_time_s,
        primal_obj,
        dual_obj,
        converged,
        state,
    })
}
