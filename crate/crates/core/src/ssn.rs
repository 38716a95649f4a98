//! Semismooth Newton solver for the inner augmented-Lagrangian subproblem.
//!
//! For fixed multiplier `β̃` and penalty `σ` the subproblem in `u` is
//!
//! ```text
//! ψ(u) = ½‖u‖² + ⟨Ỹ, u⟩ − ‖β̃‖²/(2σ) + ‖w‖²/(2σ),   w = soft(β̃ − σX̃u, σλω)
//! ∇ψ(u) = u + Ỹ − X̃ᵀ w
//! ```
//!
//! `ψ` is strongly convex with a piecewise-linear gradient, so Newton steps use
//! `H = I + σ X̃_Dᵀ X̃_D` restricted to the active set `D`.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, norm_sq, SpdFactor};
use crate::problem::TransformedProblem;
use crate::prox::{soft_threshold_scaled_into, BoxRadii};

/// Parameters of the Newton loop, CG and the Armijo search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    /// Armijo sufficient-decrease constant, in `(0, ½)`.
    pub mu: f64,
    /// Backtracking factor, in `(0, 1)`.
    pub rho: f64,
    /// Exponent `t` in the CG target `min(η̄, ‖∇ψ‖^{1+t})`, in `(0, 1]`.
    pub t_exp: f64,
    pub eta_bar: f64,
    /// Gradient tolerance used when no outer loop supplies one.
    pub grad_tol: f64,
    pub max_newton: usize,
    pub max_cg: usize,
    /// Largest active set solved directly through the `r × r` Woodbury system.
    pub r_direct: usize,
    pub max_backtracks: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            mu: 0.1,
            rho: 0.84,
            t_exp: 0.5,
            eta_bar: 0.5,
            grad_tol: 1e-6,
            max_newton: 50,
            max_cg: 300,
            r_direct: 500,
            max_backtracks: 100,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("newton config: {what}")));
        if !(self.mu > 0.0 && self.mu < 0.5) {
            return bad("mu must lie in (0, 1/2)");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.t_exp > 0.0 && self.t_exp <= 1.0) {
            return bad("t must lie in (0, 1]");
        }
        if !(self.eta_bar > 0.0 && self.eta_bar < 1.0) {
            return bad("eta_bar must lie in (0, 1)");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if self.max_newton == 0 || self.max_cg == 0 || self.max_backtracks == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }
}

/// One instance of the inner subproblem.
#[derive(Clone, Debug)]
pub struct InnerProblem<'a> {
    pub problem: &'a TransformedProblem,
    pub beta_tilde: &'a [f64],
    pub sigma: f64,
    /// `λω`.
    pub radii: &'a BoxRadii,
    sigma_radii: BoxRadii,
}

impl<'a> InnerProblem<'a> {
    pub fn new(
        problem: &'a TransformedProblem,
        beta_tilde: &'a [f64],
        sigma: f64,
        radii: &'a BoxRadii,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma = {sigma}")));
        }
        let p = problem.p();
        if beta_tilde.len() != p || radii.len() != p {
            return Err(Error::Dimension(format!(
                "beta has {}, radii {}, design has {p} covariates",
                beta_tilde.len(),
                radii.len()
            )));
        }
        Ok(Self {
            problem,
            beta_tilde,
            sigma,
            radii,
            sigma_radii: radii.scaled(sigma),
        })
    }

    /// `σλω`.
    pub fn sigma_radii(&self) -> &BoxRadii {
        &self.sigma_radii
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn p(&self) -> usize {
        self.problem.p()
    }

    fn check_u(&self, u: &[f64]) {
        assert_eq!(u.len(), self.n(), "u has the wrong length");
    }

    /// `β̃ − σ a`.
    fn prox_argument(&self, a: &[f64]) -> Vec<f64> {
        self.beta_tilde
            .iter()
            .zip(a)
            .map(|(b, x)| b - self.sigma * x)
            .collect()
    }

    fn soft(&self, z: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; z.len()];
        soft_threshold_scaled_into(z, self.radii, self.sigma, &mut w);
        w
    }
}

/// Indices where soft thresholding acts as a shift.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
}

impl ActiveSet {
    pub fn r(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `D = {i : |z_i| > r_i}`; points on the boundary are left out.
pub fn active_set(z: &[f64], radii: &BoxRadii) -> ActiveSet {
    assert_eq!(z.len(), radii.len(), "active set dimension mismatch");
    ActiveSet {
        indices: z
            .iter()
            .zip(radii.as_slice())
            .enumerate()
            .filter(|(_, (zi, ri))| zi.abs() > **ri)
            .map(|(i, _)| i)
            .collect(),
    }
}

/// Everything needed at a Newton iterate.
#[derive(Clone, Debug)]
pub struct PsiEval {
    /// `X̃ u`.
    pub xu: Vec<f64>,
    /// `β̃ − σ X̃ u`.
    pub z: Vec<f64>,
    /// `soft(z, σλω)`; at the inner solution this is the next multiplier.
    pub w: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
}

impl PsiEval {
    pub fn new(u: &[f64], prob: &InnerProblem<'_>) -> Self {
        prob.check_u(u);
        Self::with_xu(u, prob.problem.xt_mul(u), prob)
    }

    fn with_xu(u: &[f64], xu: Vec<f64>, prob: &InnerProblem<'_>) -> Self {
        let z = prob.prox_argument(&xu);
        let w = prob.soft(&z);
        let yt = prob.problem.yt();
        let value = 0.5 * norm_sq(u) + dot(yt, u) - norm_sq(prob.beta_tilde) / (2.0 * prob.sigma)
            + norm_sq(&w) / (2.0 * prob.sigma);
        let xtw = prob.problem.xt_tr_mul(&w);
        let grad = u
            .iter()
            .zip(yt)
            .zip(&xtw)
            .map(|((ui, yi), ai)| ui + yi - ai)
            .collect();
        Self {
            xu,
            z,
            w,
            value,
            grad,
        }
    }
}

pub fn psi_value(u: &[f64], prob: &InnerProblem<'_>) -> f64 {
    prob.check_u(u);
    let z = prob.prox_argument(&prob.problem.xt_mul(u));
    let w = prob.soft(&z);
    0.5 * norm_sq(u) + dot(prob.problem.yt(), u) - norm_sq(prob.beta_tilde) / (2.0 * prob.sigma)
        + norm_sq(&w) / (2.0 * prob.sigma)
}

pub fn psi_gradient(u: &[f64], prob: &InnerProblem<'_>) -> Vec<f64> {
    PsiEval::new(u, prob).grad
}

/// How a Newton direction was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionKind {
    SteepestDescent,
    Woodbury,
    Cg { iters: usize },
}

/// `H d` with `H = I + σ X̃_Dᵀ X̃_D`.
pub fn apply_hessian(d: &[f64], active: &ActiveSet, prob: &InnerProblem<'_>) -> Vec<f64> {
    let xt = prob.problem.xt();
    let mut xd = vec![0.0; active.r()];
    xt.mul_rows_into(&active.indices, d, &mut xd);
    let mut out = vec![0.0; d.len()];
    xt.tr_mul_rows_into(&active.indices, |k| prob.sigma * xd[k], &mut out);
    for (o, di) in out.iter_mut().zip(d) {
        *o += di;
    }
    out
}

/// Solves `H d = −g` for the active set `D` of the current iterate.
pub fn direction_for(
    grad: &[f64],
    active: &ActiveSet,
    prob: &InnerProblem<'_>,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, DirectionKind)> {
    if active.is_empty() {
        return Ok((grad.iter().map(|g| -g).collect(), DirectionKind::SteepestDescent));
    }
    let n = grad.len();
    if active.r() <= cfg.r_direct.min(n) {
        woodbury_direction(grad, active, prob).map(|d| (d, DirectionKind::Woodbury))
    } else {
        let g_norm = norm2(grad);
        let target = cfg.eta_bar.min(g_norm.powf(1.0 + cfg.t_exp));
        cg_direction(grad, active, prob, target, cfg.max_cg)
            .map(|(d, iters)| (d, DirectionKind::Cg { iters }))
    }
}

/// `d = −[g − X̃_Dᵀ (σ⁻¹ I + X̃_D X̃_Dᵀ)⁻¹ X̃_D g]`.
fn woodbury_direction(grad: &[f64], active: &ActiveSet, prob: &InnerProblem<'_>) -> Result<Vec<f64>> {
    let idx = &active.indices;
    let mut m = prob.problem.gram_rows(idx);
    let inv_sigma = 1.0 / prob.sigma;
    for k in 0..idx.len() {
        m[(k, k)] += inv_sigma;
    }
    let factor = SpdFactor::new(m)?;
    let xt = prob.problem.xt();
    let mut rhs = vec![0.0; idx.len()];
    xt.mul_rows_into(idx, grad, &mut rhs);
    let s = factor.solve(&rhs);
    let mut back = vec![0.0; grad.len()];
    xt.tr_mul_rows_into(idx, |k| s[k], &mut back);
    Ok(grad.iter().zip(&back).map(|(g, b)| b - g).collect())
}

/// Conjugate gradients on `H d = −g`, stopping once `‖H d + g‖ ≤ target`.
fn cg_direction(
    grad: &[f64],
    active: &ActiveSet,
    prob: &InnerProblem<'_>,
    target: f64,
    max_cg: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = grad.len();
    let mut d = vec![0.0; n];
    let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut q = r.clone();
    let mut rr = norm_sq(&r);
    for it in 0..max_cg {
        if rr.sqrt() <= target {
            return Ok((d, it));
        }
        let hq = apply_hessian(&q, active, prob);
        let alpha = rr / dot(&q, &hq);
        axpy(alpha, &q, &mut d);
        axpy(-alpha, &hq, &mut r);
        let rr_new = norm_sq(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (qi, ri) in q.iter_mut().zip(&r) {
            *qi = ri + beta * *qi;
        }
    }
    if rr.sqrt() <= target {
        return Ok((d, max_cg));
    }
    Err(Error::CgStall {
        iters: max_cg,
        residual: rr.sqrt(),
        target,
    })
}

/// Newton direction at `u`.
pub fn newton_direction(u: &[f64], prob: &InnerProblem<'_>, cfg: &NewtonConfig) -> Result<Vec<f64>> {
    let eval = PsiEval::new(u, prob);
    let active = active_set(&eval.z, prob.sigma_radii());
    direction_for(&eval.grad, &active, prob, cfg).map(|(d, _)| d)
}

/// Result of a backtracking search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub alpha: f64,
    pub backtracks: usize,
}

/// Evaluates `ψ(u + α d) − ψ(u)` without forming the new point.
struct Ray<'p, 'a> {
    prob: &'p InnerProblem<'a>,
    xd: Vec<f64>,
    xu: &'p [f64],
    w0: &'p [f64],
    /// `⟨u, d⟩ + ⟨Ỹ, d⟩`.
    lin: f64,
    dd: f64,
}

impl<'p, 'a> Ray<'p, 'a> {
    fn new(u: &[f64], d: &[f64], eval: &'p PsiEval, prob: &'p InnerProblem<'a>) -> Self {
        Self {
            prob,
            xd: prob.problem.xt_mul(d),
            xu: &eval.xu,
            w0: &eval.w,
            lin: dot(u, d) + dot(prob.problem.yt(), d),
            dd: norm_sq(d),
        }
    }

    fn delta(&self, alpha: f64) -> f64 {
        let sigma = self.prob.sigma;
        let radii = self.prob.radii.as_slice();
        let mut dw = 0.0;
        for j in 0..self.xd.len() {
            let z = self.prob.beta_tilde[j] - sigma * (self.xu[j] + alpha * self.xd[j]);
            let w = crate::prox::soft_threshold_scalar(z, sigma * radii[j]);
            let w0 = self.w0[j];
            dw += (w - w0) * (w + w0);
        }
        alpha * self.lin + 0.5 * alpha * alpha * self.dd + dw / (2.0 * sigma)
    }
}

/// Armijo backtracking from a precomputed evaluation at `u`.
fn armijo(
    u: &[f64],
    d: &[f64],
    eval: &PsiEval,
    prob: &InnerProblem<'_>,
    cfg: &NewtonConfig,
) -> Result<(StepInfo, Vec<f64>)> {
    let ray = Ray::new(u, d, eval, prob);
    let slope = dot(&eval.grad, d);
    let mut alpha = 1.0;
    for m in 0..=cfg.max_backtracks {
        if ray.delta(alpha) <= cfg.mu * alpha * slope {
            return Ok((StepInfo { alpha, backtracks: m }, ray.xd));
        }
        alpha *= cfg.rho;
    }
    Err(Error::LineSearchFail {
        steps: cfg.max_backtracks,
    })
}

/// Largest `α = ρᵐ` satisfying `ψ(u + αd) ≤ ψ(u) + μα⟨∇ψ(u), d⟩`.
pub fn line_search(u: &[f64], d: &[f64], prob: &InnerProblem<'_>, cfg: &NewtonConfig) -> Result<StepInfo> {
    let eval = PsiEval::new(u, prob);
    armijo(u, d, &eval, prob, cfg).map(|(s, _)| s)
}

/// Outcome of [`ssn_solve`].
#[derive(Clone, Debug)]
pub struct SsnOutcome {
    pub u: Vec<f64>,
    pub iters: usize,
    pub grad_norm: f64,
    /// `soft(β̃ − σX̃u, σλω)` at the returned `u`.
    pub w: Vec<f64>,
    /// `X̃ u` at the returned `u`.
    pub xu: Vec<f64>,
    pub value: f64,
}

/// Newton iterations from `u0` until `‖∇ψ(u)‖ ≤ inner_tol`.
pub fn ssn_solve(
    u0: &[f64],
    prob: &InnerProblem<'_>,
    cfg: &NewtonConfig,
    inner_tol: f64,
) -> Result<SsnOutcome> {
    cfg.validate()?;
    prob.check_u(u0);
    let mut u = u0.to_vec();
    let mut eval = PsiEval::new(&u, prob);
    let mut prev_norm = f64::NAN;
    for iter in 0..=cfg.max_newton {
        let g_norm = norm2(&eval.grad);
        if iter > 0 && prev_norm > 0.0 {
            log::trace!(
                "ssn {iter}: |grad| = {g_norm:.3e}, rate |g+|/|g|^(1+t) = {:.3e}",
                g_norm / prev_norm.powf(1.0 + cfg.t_exp)
            );
        } else {
            log::trace!("ssn {iter}: |grad| = {g_norm:.3e}");
        }
        if g_norm <= inner_tol {
            return Ok(SsnOutcome {
                u,
                iters: iter,
                grad_norm: g_norm,
                w: eval.w,
                xu: eval.xu,
                value: eval.value,
            });
        }
        if iter == cfg.max_newton {
            return Err(Error::MaxNewtonExceeded {
                iters: iter,
                grad_norm: g_norm,
                u,
            });
        }
        let active = active_set(&eval.z, prob.sigma_radii());
        let (d, kind) = direction_for(&eval.grad, &active, prob, cfg)?;
        let (step, xd) = armijo(&u, &d, &eval, prob, cfg)?;
        log::trace!(
            "ssn {iter}: |D| = {}, {kind:?}, alpha = {:.3e}",
            active.r(),
            step.alpha
        );
        axpy(step.alpha, &d, &mut u);
        let mut xu = eval.xu;
        axpy(step.alpha, &xd, &mut xu);
        eval = PsiEval::with_xu(&u, xu, prob);
        prev_norm = g_norm;
    }
    unreachable!("loop returns on its last pass")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn small_problem() -> TransformedProblem {
        let xt = DenseMatrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.2 - 0.4 + 0.05 * i as f64);
        let yt = vec![0.3, -0.1, 0.8, -0.5, 0.2, 0.0];
        TransformedProblem::new(xt, yt).unwrap()
    }

    #[test]
    fn psi_vanishes_at_origin() {
        let tp = small_problem();
        let beta = vec![0.0; 4];
        let radii = BoxRadii::uniform(4, 0.3);
        let prob = InnerProblem::new(&tp, &beta, 1.5, &radii).unwrap();
        assert_eq!(psi_value(&[0.0; 6], &prob), 0.0);
    }

    #[test]
    fn small_multiplier_is_killed_by_prox() {
        let xt = DenseMatrix::from_fn(3, 4, |i, j| (i + j) as f64);
        let tp = TransformedProblem::new(xt, vec![0.0; 4]).unwrap();
        let beta = vec![0.1, -0.2, 0.05];
        let radii = BoxRadii::uniform(3, 1.0);
        let sigma = 0.5;
        let prob = InnerProblem::new(&tp, &beta, sigma, &radii).unwrap();
        let expected = -norm_sq(&beta) / (2.0 * sigma);
        assert!((psi_value(&[0.0; 4], &prob) - expected).abs() < 1e-15);
    }

    #[test]
    fn active_set_example() {
        let d = active_set(&[2.0, -0.5, 1.0], &BoxRadii::uniform(3, 1.0));
        assert_eq!(d.indices, vec![0]);
        assert_eq!(d.r(), 1);
    }

    #[test]
    fn large_radii_make_root_minus_y() {
        let tp = small_problem();
        let beta = vec![0.0; 4];
        let radii = BoxRadii::uniform(4, 1e6);
        let prob = InnerProblem::new(&tp, &beta, 1.0, &radii).unwrap();
        let u: Vec<f64> = tp.yt().iter().map(|y| -y).collect();
        let g = psi_gradient(&u, &prob);
        assert!(norm2(&g) == 0.0);
        let out = ssn_solve(&u, &prob, &NewtonConfig::default(), 1e-10).unwrap();
        assert_eq!(out.iters, 0);
    }

    #[test]
    fn empty_active_set_gives_steepest_descent() {
        let tp = small_problem();
        let beta = vec![0.0; 4];
        let radii = BoxRadii::uniform(4, 1e6);
        let prob = InnerProblem::new(&tp, &beta, 1.0, &radii).unwrap();
        let u = vec![0.1; 6];
        let d = newton_direction(&u, &prob, &NewtonConfig::default()).unwrap();
        let g = psi_gradient(&u, &prob);
        for (a, b) in d.iter().zip(&g) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn cg_and_woodbury_agree() {
        let tp = small_problem();
        let beta = vec![2.0, -3.0, 1.5, 4.0];
        let radii = BoxRadii::uniform(4, 0.1);
        let prob = InnerProblem::new(&tp, &beta, 1.0, &radii).unwrap();
        let u = vec![0.2, -0.1, 0.0, 0.3, 0.1, -0.2];
        let eval = PsiEval::new(&u, &prob);
        let active = active_set(&eval.z, prob.sigma_radii());
        assert!(active.r() > 0);
        let mut cfg = NewtonConfig::default();
        let (dw, kind) = direction_for(&eval.grad, &active, &prob, &cfg).unwrap();
        assert_eq!(kind, DirectionKind::Woodbury);
        cfg.r_direct = 0;
        cfg.eta_bar = 1e-13;
        let (dc, kind) = direction_for(&eval.grad, &active, &prob, &cfg).unwrap();
        assert!(matches!(kind, DirectionKind::Cg { .. }));
        for (a, b) in dw.iter().zip(&dc) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_stall_is_reported() {
        let tp = small_problem();
        let beta = vec![2.0, -3.0, 1.5, 4.0];
        let radii = BoxRadii::uniform(4, 0.1);
        let prob = InnerProblem::new(&tp, &beta, 1.0, &radii).unwrap();
        let u = vec![0.2, -0.1, 0.0, 0.3, 0.1, -0.2];
        let cfg = NewtonConfig {
            r_direct: 0,
            max_cg: 1,
            eta_bar: 1e-300,
            ..NewtonConfig::default()
        };
        assert!(matches!(
            newton_direction(&u, &prob, &cfg),
            Err(Error::CgStall { iters: 1, .. })
        ));
    }

    #[test]
    fn solve_reaches_tolerance_and_decreases_psi() {
        let tp = small_problem();
        let beta = vec![0.5, -0.2, 0.1, 0.3];
        let radii = BoxRadii::uniform(4, 0.05);
        let prob = InnerProblem::new(&tp, &beta, 2.0, &radii).unwrap();
        let u0 = vec![0.0; 6];
        let start = psi_value(&u0, &prob);
        let out = ssn_solve(&u0, &prob, &NewtonConfig::default(), 1e-10).unwrap();
        assert!(out.grad_norm <= 1e-10);
        assert!(out.value < start);
        assert!(norm2(&psi_gradient(&out.u, &prob)) <= 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(NewtonConfig::default().validate().is_ok());
        let bad = NewtonConfig {
            mu: 0.5,
            ..NewtonConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = NewtonConfig {
            rho: 1.0,
            ..NewtonConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
