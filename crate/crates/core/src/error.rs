use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel weights degenerate at point {index} (t = {t}) for bandwidth {h}")]
    DegenerateBandwidth { index: usize, t: f64, h: f64 },

    #[error("every bandwidth in the grid is degenerate")]
    AllDegenerate,

    #[error("conjugate gradient stalled after {iters} iterations (residual {residual:.3e}, target {target:.3e})")]
    CgStall {
        iters: usize,
        residual: f64,
        target: f64,
    },

    #[error("line search failed after {steps} backtracking steps")]
    LineSearchFail { steps: usize },

    #[error("semismooth Newton hit {iters} iterations with gradient norm {grad_norm:.3e}")]
    MaxNewtonExceeded {
        iters: usize,
        grad_norm: f64,
        u: Vec<f64>,
    },

    #[error("dual variable leaves the box by {excess:.3e}")]
    InfeasibleV { excess: f64 },

    #[error("factorization failed: {0}")]
    FactorizationFail(String),

    #[error("factorization was built for sigma = {built}, requested {requested}")]
    StaleFactorization { built: f64, requested: f64 },

    #[error("gram matrix is numerically singular (condition estimate {cond:.3e})")]
    SingularGram { cond: f64 },

    #[error("X~Y is identically zero, no lambda grid can be formed")]
    ZeroCorrelation,

    #[error("no converged fit on the lambda path")]
    NoConvergedFit,

    #[error("true coefficient vector is zero")]
    ZeroTruth,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
