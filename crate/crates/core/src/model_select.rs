//! Adaptive weights, the λ continuation grid and information-criterion selection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, norm_sq};
use crate::problem::TransformedProblem;
use crate::prox::BoxRadii;
use crate::ssnal::{ssnal_solve, SolveOptions, SolveReport};

/// Pilot magnitudes below this give an infinite weight.
pub const PILOT_ZERO: f64 = 1e-12;
/// Pilot value used off the working support in high dimensions.
pub const OFF_SUPPORT_PILOT: f64 = 1e-3;
/// Gram matrices at or above this condition number count as singular.
pub const MAX_GRAM_COND: f64 = 1e12;
pub const GRID_LEN: usize = 201;
pub const GRID_RATIO: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    pub omega: Vec<f64>,
    pub gamma: f64,
    pub pilot: Vec<f64>,
}

impl WeightSpec {
    /// `ω_j = |pilot_j|^{−γ}`, infinite where the pilot is numerically zero.
    pub fn from_pilot(pilot: Vec<f64>, gamma: f64) -> Self {
        let omega = pilot
            .iter()
            .map(|b| {
                if b.abs() < PILOT_ZERO {
                    f64::INFINITY
                } else {
                    b.abs().powf(-gamma)
                }
            })
            .collect();
        Self { omega, gamma, pilot }
    }

    /// Unit weights: the plain lasso.
    pub fn uniform(p: usize) -> Self {
        Self {
            omega: vec![1.0; p],
            gamma: 0.0,
            pilot: vec![1.0; p],
        }
    }

    pub fn radii(&self, lambda: f64) -> Result<BoxRadii> {
        BoxRadii::from_weights(lambda, &self.omega)
    }
}

/// Least squares on the rows `idx` of `X̃`, refusing ill-conditioned Gram matrices.
fn restricted_ls(prob: &TransformedProblem, idx: &[usize]) -> Result<Vec<f64>> {
    let g: DMatrix<f64> = prob.gram_rows(idx);
    let eig = SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond < MAX_GRAM_COND) {
        return Err(Error::SingularGram { cond });
    }
    let xty = prob.xty();
    let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&j| xty[j]));
    let chol = g.cholesky().ok_or(Error::SingularGram { cond })?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

/// Weights from the full least-squares pilot `(X̃X̃ᵀ)⁻¹X̃Ỹ`, `γ = 2`.
pub fn adaptive_weights_lowdim(prob: &TransformedProblem) -> Result<WeightSpec> {
    if prob.p() >= prob.n() {
        return Err(Error::InvalidInput(format!(
            "least-squares pilot needs p < n (p = {}, n = {})",
            prob.p(),
            prob.n()
        )));
    }
    let idx: Vec<usize> = (0..prob.p()).collect();
    Ok(WeightSpec::from_pilot(restricted_ls(prob, &idx)?, 2.0))
}

/// Weights from least squares restricted to `support`, with pilot `1e-3` elsewhere.
pub fn adaptive_weights_highdim(prob: &TransformedProblem, support: &[usize]) -> Result<WeightSpec> {
    let mut idx = support.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if idx.len() >= prob.n() {
        return Err(Error::InvalidInput(format!(
            "support of size {} is not smaller than n = {}",
            idx.len(),
            prob.n()
        )));
    }
    if let Some(&j) = idx.iter().find(|&&j| j >= prob.p()) {
        return Err(Error::InvalidInput(format!("support index {j} out of range")));
    }
    let mut pilot = vec![OFF_SUPPORT_PILOT; prob.p()];
    if !idx.is_empty() {
        for (&j, b) in idx.iter().zip(restricted_ls(prob, &idx)?) {
            pilot[j] = b;
        }
    }
    Ok(WeightSpec::from_pilot(pilot, 2.0))
}

/// Weights when no true support is known.
///
/// Uses the full least-squares pilot when `p < n`. Otherwise a plain lasso at
/// `λ = 0.01 · ‖X̃Ỹ‖∞` picks a working support and the restricted pilot is
/// built on it.
pub fn adaptive_weights_auto(prob: &TransformedProblem, opts: &SolveOptions) -> Result<WeightSpec> {
    if prob.p() < prob.n() {
        return adaptive_weights_lowdim(prob);
    }
    let lam = 0.01 * norm_inf(&prob.xty());
    let radii = BoxRadii::uniform(prob.p(), lam);
    let fit = ssnal_solve(prob, &radii, opts, None)?;
    let mut support = fit.support();
    if support.len() >= prob.n() {
        let mut order = support.clone();
        order.sort_by(|&a, &b| fit.beta_hat[b].abs().total_cmp(&fit.beta_hat[a].abs()));
        order.truncate(prob.n() / 2);
        support = order;
    }
    log::info!("pilot support from lasso at lambda {lam:.3e}: {} coordinates", support.len());
    adaptive_weights_highdim(prob, &support)
}

/// `λ_max = ½‖X̃Ỹ‖∞²` down to `1e-10 · λ_max`, 201 log-spaced points.
pub fn lambda_grid(prob: &TransformedProblem) -> Result<Vec<f64>> {
    let m = norm_inf(&prob.xty());
    if m == 0.0 {
        return Err(Error::ZeroCorrelation);
    }
    Ok(log_grid(0.5 * m * m, GRID_RATIO, GRID_LEN))
}

/// Descending log-spaced grid from `top` to `ratio · top` with exact endpoints.
pub fn log_grid(top: f64, ratio: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![top];
    }
    let step = ratio.ln() / (len - 1) as f64;
    let mut grid: Vec<f64> = (0..len).map(|k| top * (step * k as f64).exp()).collect();
    grid[0] = top;
    grid[len - 1] = top * ratio;
    grid
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Bic,
    Hbic,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "hbic" => Ok(Criterion::Hbic),
            _ => Err(Error::InvalidInput(format!("unknown criterion '{s}'"))),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::Bic => "bic",
            Criterion::Hbic => "hbic",
        })
    }
}

/// `n log(RSS/n) + df log n` (BIC) or `n log(RSS/n) + df log(log n) log p` (HBIC).
pub fn information_score(rss: f64, df: usize, n: usize, p: usize, mode: Criterion) -> f64 {
    let nf = n as f64;
    let fit = nf * (rss / nf).ln();
    let per_df = match mode {
        Criterion::Bic => nf.ln(),
        Criterion::Hbic => nf.ln().ln() * (p as f64).ln(),
    };
    fit + df as f64 * per_df
}

pub fn bic_score(report: &SolveReport, prob: &TransformedProblem, mode: Criterion) -> f64 {
    let rss = norm_sq(&prob.residual(&report.beta_hat));
    let df = report.beta_hat.iter().filter(|b| **b != 0.0).count();
    information_score(rss, df, prob.n(), prob.p(), mode)
}

/// Fits along a λ grid with their scores.
#[derive(Clone, Debug)]
pub struct LambdaPath {
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub reports: Vec<SolveReport>,
}

/// Solves every grid point, warm-starting each from the previous fit when `warm`.
pub fn solve_path(
    prob: &TransformedProblem,
    weights: &WeightSpec,
    grid: &[f64],
    opts: &SolveOptions,
    mode: Criterion,
    warm: bool,
) -> Result<LambdaPath> {
    let reports: Vec<SolveReport> = if warm {
        let mut out: Vec<SolveReport> = Vec::with_capacity(grid.len());
        for &lam in grid {
            let radii = weights.radii(lam)?;
            let rep = ssnal_solve(prob, &radii, opts, out.last().map(|r| &r.state))?;
            log::debug!(
                "path lambda {lam:.3e}: nnz {}, res {:.2e}, outer {}",
                rep.support().len(),
                rep.res,
                rep.outer_iters
            );
            out.push(rep);
        }
        out
    } else {
        crate::par::map(grid.len(), |k| {
            weights
                .radii(grid[k])
                .and_then(|radii| ssnal_solve(prob, &radii, opts, None))
        })
        .into_iter()
        .collect::<Result<_>>()?
    };
    let scores = reports.iter().map(|r| bic_score(r, prob, mode)).collect();
    Ok(LambdaPath {
        grid: grid.to_vec(),
        scores,
        reports,
    })
}

/// Index of the lowest score among converged fits; ties go to the larger λ.
pub fn select_index(path: &LambdaPath) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (k, rep) in path.reports.iter().enumerate() {
        if !rep.converged || !path.scores[k].is_finite() {
            continue;
        }
        best = match best {
            Some(b) if path.scores[b] < path.scores[k] => Some(b),
            Some(b) if path.scores[b] == path.scores[k] && path.grid[b] >= path.grid[k] => Some(b),
            _ => Some(k),
        };
    }
    best.ok_or(Error::NoConvergedFit)
}

pub fn select_lambda(path: &LambdaPath) -> Result<(f64, &SolveReport)> {
    let k = select_index(path)?;
    Ok((path.grid[k], &path.reports[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::ssnal::DualState;

    #[test]
    fn pilot_to_weight() {
        let w = WeightSpec::from_pilot(vec![0.5, -2.0, 0.0, 1e-13], 2.0);
        assert_eq!(w.omega[0], 4.0);
        assert_eq!(w.omega[1], 0.25);
        assert!(w.omega[2].is_infinite() && w.omega[3].is_infinite());
    }

    #[test]
    fn orthonormal_rows_recover_unit_pilot() {
        let xt = DenseMatrix::from_fn(3, 5, |i, j| if i == j { 1.0 } else { 0.0 });
        let yt = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        let tp = TransformedProblem::new(xt, yt).unwrap();
        let w = adaptive_weights_lowdim(&tp).unwrap();
        assert!((w.pilot[0] - 1.0).abs() < 1e-15);
        assert_eq!(w.omega[0], 1.0);
        assert!(w.omega[1].is_infinite() && w.omega[2].is_infinite());
    }

    #[test]
    fn singular_gram_is_rejected() {
        let xt = DenseMatrix::from_fn(2, 5, |_, j| j as f64);
        let tp = TransformedProblem::new(xt, vec![1.0; 5]).unwrap();
        assert!(matches!(adaptive_weights_lowdim(&tp), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn empty_support_gives_off_support_weights() {
        let xt = DenseMatrix::from_fn(6, 4, |i, j| (i + j) as f64);
        let tp = TransformedProblem::new(xt, vec![1.0; 4]).unwrap();
        let w = adaptive_weights_highdim(&tp, &[]).unwrap();
        assert!(w.omega.iter().all(|o| *o == 1e6));
    }

    #[test]
    fn grid_shape() {
        let xt = DenseMatrix::from_row_major(1, 2, vec![1.0, 1.0]).unwrap();
        let tp = TransformedProblem::new(xt, vec![1.0, 1.0]).unwrap();
        let g = lambda_grid(&tp).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 2.0);
        assert_eq!(g[200], 2e-10);
        let ratio = (1e-10f64).powf(1.0 / 200.0);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        let zero = TransformedProblem::new(DenseMatrix::zeros(1, 2), vec![1.0, 1.0]).unwrap();
        assert!(matches!(lambda_grid(&zero), Err(Error::ZeroCorrelation)));
    }

    #[test]
    fn score_formulas() {
        let s = information_score(8.0, 0, 4, 3, Criterion::Bic);
        assert!((s - 4.0 * 2f64.ln()).abs() < 1e-14);
        let b = information_score(8.0, 2, 4, 3, Criterion::Bic);
        assert!((b - s - 2.0 * 4f64.ln()).abs() < 1e-14);
        let h = information_score(8.0, 2, 4, 3, Criterion::Hbic);
        assert!((h - s - 2.0 * 4f64.ln().ln() * 3f64.ln()).abs() < 1e-14);
        assert!(information_score(8.0, 1, 4, 3, Criterion::Bic) < b);
    }

    fn fake_report(converged: bool) -> SolveReport {
        SolveReport {
            beta_hat: vec![],
            res: 0.0,
            outer_iters: 1,
            total_inner_iters: 1,
            wall_time_s: 0.0,
            primal_obj: 0.0,
            dual_obj: 0.0,
            converged,
            state: DualState::zeros(0, 0, 1.0),
        }
    }

    #[test]
    fn selection_rules() {
        let path = LambdaPath {
            grid: vec![3.0, 2.0, 1.0],
            scores: vec![5.0, 3.0, 4.0],
            reports: vec![fake_report(true); 3],
        };
        assert_eq!(select_index(&path).unwrap(), 1);
        let tie = LambdaPath {
            scores: vec![3.0, 3.0, 4.0],
            ..path.clone()
        };
        assert_eq!(select_index(&tie).unwrap(), 0);
        let skip = LambdaPath {
            reports: vec![fake_report(true), fake_report(false), fake_report(true)],
            ..path.clone()
        };
        assert_eq!(select_index(&skip).unwrap(), 2);
        let none = LambdaPath {
            reports: vec![fake_report(false); 3],
            ..path
        };
        assert!(matches!(select_index(&none), Err(Error::NoConvergedFit)));
    }
}
