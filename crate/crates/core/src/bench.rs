//! Repeated simulation runs, metrics and report files.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmOptions};
use crate::datagen::{generate, ScenarioSpec, SyntheticInstance};
use crate::error::{Error, Result};
use crate::linalg::{norm1, norm2};
use crate::model_select::{
    adaptive_weights_highdim, adaptive_weights_lowdim, lambda_grid, select_lambda, solve_path, Criterion,
    WeightSpec,
};
use crate::problem::TransformedProblem;
use crate::smoothing::{
    default_bandwidth_grid, partial_residual_transform, select_bandwidth_cv, EpanechnikovSmoother, RawSample,
};
use crate::ssnal::{ssnal_solve, SolveOptions, SolveReport};

/// Per-solve measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub re_err: f64,
    pub nnz: usize,
    pub res: f64,
    pub time_s: f64,
    pub iters: usize,
}

/// `‖β* − β̂‖ / ‖β*‖`.
pub fn relative_error(beta_hat: &[f64], beta_star: &[f64]) -> Result<f64> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} entries, truth {}",
            beta_hat.len(),
            beta_star.len()
        )));
    }
    let denom = norm2(beta_star);
    if denom == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let diff: Vec<f64> = beta_star.iter().zip(beta_hat).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff) / denom)
}

/// Smallest `k` whose `k` largest magnitudes carry 99.9% of `‖β̂‖₁`; zero for `β̂ = 0`.
pub fn nnz_estimate(beta_hat: &[f64]) -> usize {
    let total = norm1(beta_hat);
    if total == 0.0 {
        return 0;
    }
    let mut mags: Vec<f64> = beta_hat.iter().map(|b| b.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let target = 0.999 * total;
    let mut acc = 0.0;
    for (k, m) in mags.iter().enumerate() {
        acc += m;
        if acc >= target {
            return k + 1;
        }
    }
    mags.len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Solver {
    Ssnal,
    Admm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Penalty {
    Adaptive,
    Lasso,
}

impl Penalty {
    pub fn name(self) -> &'static str {
        match self {
            Penalty::Adaptive => "adaptive",
            Penalty::Lasso => "lasso",
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" => Ok(Penalty::Adaptive),
            "lasso" => Ok(Penalty::Lasso),
            _ => Err(Error::InvalidInput(format!("unknown penalty '{s}'"))),
        }
    }
}

/// Solver and penalty pair, labelled like `SSNAL_a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub solver: Solver,
    pub penalty: Penalty,
}

impl Method {
    pub fn label(&self) -> String {
        let s = match self.solver {
            Solver::Ssnal => "SSNAL",
            Solver::Admm => "ADMM",
        };
        let p = match self.penalty {
            Penalty::Adaptive => "a",
            Penalty::Lasso => "l",
        };
        format!("{s}_{p}")
    }
}

/// How the penalty level is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LambdaChoice {
    /// On the scale of the original data; divided by `scale²` internally.
    Fixed(f64),
    Criterion(Criterion),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BandwidthChoice {
    Fixed(f64),
    /// Leave-one-out CV over the default grid.
    Cv,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub reps: usize,
    pub solvers: Vec<Solver>,
    pub penalties: Vec<Penalty>,
    pub lambda: LambdaChoice,
    pub bandwidth: BandwidthChoice,
    pub ssnal: SolveOptions,
    pub admm: AdmmOptions,
    /// Run repetitions on the thread pool.
    pub parallel_reps: bool,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSpec, reps: usize, lambda: LambdaChoice) -> Self {
        Self {
            scenario,
            reps,
            solvers: vec![Solver::Ssnal, Solver::Admm],
            penalties: vec![Penalty::Adaptive],
            lambda,
            bandwidth: BandwidthChoice::Cv,
            ssnal: SolveOptions::default(),
            admm: AdmmOptions::default(),
            parallel_reps: true,
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        for &penalty in &self.penalties {
            for &solver in &self.solvers {
                out.push(Method { solver, penalty });
            }
        }
        out
    }
}

/// One (rep, method) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub method: Method,
    /// Selected or fixed λ on the original scale.
    pub lambda: f64,
    /// Hash of `(X̃, Ỹ, λ, ω)` handed to the solver.
    pub input_hash: u64,
    pub metrics: Option<Metrics>,
    pub converged: bool,
    pub error: Option<String>,
    /// `(0-based index, value)` of every nonzero estimate.
    pub nonzeros: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub re_err: (f64, f64),
    pub nnz: (f64, f64),
    pub res: (f64, f64),
    pub time: (f64, f64),
    pub iter: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<AggregateRow>,
    pub records: Vec<RepRecord>,
}

impl ExperimentResult {
    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged && r.error.is_none())
    }
}

/// Mean and sample standard deviation (zero for a single value), two passes.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn weights_hash(prob_hash: u64, lambda: f64, omega: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    prob_hash.hash(&mut h);
    lambda.to_bits().hash(&mut h);
    for w in omega {
        w.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Everything computed once per repetition before the timed solves.
pub struct PreparedRep {
    pub problem: TransformedProblem,
    pub bandwidth: f64,
}

/// Kernel transform with a fixed or cross-validated bandwidth.
pub fn prepare(sample: &RawSample, bandwidth: BandwidthChoice) -> Result<PreparedRep> {
    let h = match bandwidth {
        BandwidthChoice::Fixed(h) => h,
        BandwidthChoice::Cv => select_bandwidth_cv(sample, &default_bandwidth_grid(sample.n()))?,
    };
    let smoother = EpanechnikovSmoother::new(&sample.t, h)?;
    Ok(PreparedRep {
        problem: partial_residual_transform(sample, &smoother)?,
        bandwidth: h,
    })
}

/// Weights for a penalty; high-dimensional adaptive weights use `support`.
pub fn penalty_weights(prob: &TransformedProblem, penalty: Penalty, support: Option<&[usize]>) -> Result<WeightSpec> {
    match penalty {
        Penalty::Lasso => Ok(WeightSpec::uniform(prob.p())),
        Penalty::Adaptive if prob.p() < prob.n() => adaptive_weights_lowdim(prob),
        Penalty::Adaptive => match support {
            Some(s) => adaptive_weights_highdim(prob, s),
            None => Err(Error::InvalidInput(
                "adaptive weights with p >= n need a working support".into(),
            )),
        },
    }
}

/// Internal λ for a penalty: fixed, or the score minimizer on a warm-started SSNAL path.
pub fn choose_lambda(
    prob: &TransformedProblem,
    weights: &WeightSpec,
    choice: LambdaChoice,
    opts: &SolveOptions,
) -> Result<f64> {
    match choice {
        LambdaChoice::Fixed(lam) => Ok(prob.internal_lambda(lam)),
        LambdaChoice::Criterion(mode) => {
            let grid = lambda_grid(prob)?;
            let path = solve_path(prob, weights, &grid, opts, mode, true)?;
            select_lambda(&path).map(|(lam, _)| lam)
        }
    }
}

/// Cold solve of one method at internal level `lambda`; only the solve is timed.
pub fn run_method(
    prob: &TransformedProblem,
    weights: &WeightSpec,
    lambda: f64,
    solver: Solver,
    ssnal: &SolveOptions,
    admm: &AdmmOptions,
) -> Result<(SolveReport, f64)> {
    let radii = weights.radii(lambda)?;
    let start = Instant::now();
    let rep = match solver {
        Solver::Ssnal => ssnal_solve(prob, &radii, ssnal, None)?,
        Solver::Admm => admm_solve(prob, &radii, admm)?,
    };
    Ok((rep, start.elapsed().as_secs_f64()))
}

fn failed(rep: usize, seed: u64, method: Method, err: &Error) -> RepRecord {
    RepRecord {
        rep,
        seed,
        method,
        lambda: f64::NAN,
        input_hash: 0,
        metrics: None,
        converged: false,
        error: Some(err.to_string()),
        nonzeros: vec![],
    }
}

fn run_rep(cfg: &ExperimentConfig, rep: usize) -> Vec<RepRecord> {
    let seed = cfg.scenario.seed.wrapping_add(rep as u64);
    let methods = cfg.methods();
    let inst: SyntheticInstance = match generate(&cfg.scenario.with_seed(seed)) {
        Ok(i) => i,
        Err(e) => return methods.iter().map(|&m| failed(rep, seed, m, &e)).collect(),
    };
    let prepared = match prepare(&inst.sample, cfg.bandwidth) {
        Ok(p) => p,
        Err(e) => return methods.iter().map(|&m| failed(rep, seed, m, &e)).collect(),
    };
    let prob = &prepared.problem;
    let prob_hash = prob.fingerprint();
    let support = inst.support();
    let mut out = Vec::new();
    for &penalty in &cfg.penalties {
        let setup = penalty_weights(prob, penalty, Some(&support))
            .and_then(|w| choose_lambda(prob, &w, cfg.lambda, &cfg.ssnal).map(|l| (w, l)));
        let (weights, lambda) = match setup {
            Ok(x) => x,
            Err(e) => {
                for &solver in &cfg.solvers {
                    out.push(failed(rep, seed, Method { solver, penalty }, &e));
                }
                continue;
            }
        };
        let input_hash = weights_hash(prob_hash, lambda, &weights.omega);
        for &solver in &cfg.solvers {
            let method = Method { solver, penalty };
            let record = run_method(prob, &weights, lambda, solver, &cfg.ssnal, &cfg.admm).and_then(|(report, time_s)| {
                let metrics = Metrics {
                    re_err: relative_error(&report.beta_hat, &inst.beta_star)?,
                    nnz: nnz_estimate(&report.beta_hat),
                    res: report.res,
                    time_s,
                    iters: report.outer_iters,
                };
                if !report.converged {
                    log::warn!("rep {rep} {}: not converged (res {:.3e})", method.label(), report.res);
                }
                Ok(RepRecord {
                    rep,
                    seed,
                    method,
                    lambda: lambda * prob.scale() * prob.scale(),
                    input_hash,
                    metrics: Some(metrics),
                    converged: report.converged,
                    error: None,
                    nonzeros: report
                        .beta_hat
                        .iter()
                        .enumerate()
                        .filter(|(_, b)| **b != 0.0)
                        .map(|(j, b)| (j, *b))
                        .collect(),
                })
            });
            out.push(record.unwrap_or_else(|e| failed(rep, seed, method, &e)));
        }
    }
    out
}

/// Aggregates successful cells per method, in method order.
pub fn aggregate(methods: &[Method], records: &[RepRecord]) -> Vec<AggregateRow> {
    methods
        .iter()
        .map(|m| {
            let ms: Vec<&Metrics> = records
                .iter()
                .filter(|r| r.method == *m)
                .filter_map(|r| r.metrics.as_ref())
                .collect();
            let col = |f: &dyn Fn(&Metrics) -> f64| mean_std(&ms.iter().map(|x| f(x)).collect::<Vec<_>>());
            AggregateRow {
                method: m.label(),
                re_err: col(&|x| x.re_err),
                nnz: col(&|x| x.nnz as f64),
                res: col(&|x| x.res),
                time: col(&|x| x.time_s),
                iter: col(&|x| x.iters as f64),
            }
        })
        .collect()
}

/// Runs every repetition and method; failures are recorded per cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    cfg.scenario.validate()?;
    cfg.ssnal.validate()?;
    cfg.admm.validate()?;
    let per_rep: Vec<Vec<RepRecord>> = if cfg.parallel_reps {
        crate::par::map(cfg.reps, |rep| run_rep(cfg, rep))
    } else {
        (0..cfg.reps).map(|rep| run_rep(cfg, rep)).collect()
    };
    let records: Vec<RepRecord> = per_rep.into_iter().flatten().collect();
    for rep in 0..cfg.reps {
        for &penalty in &cfg.penalties {
            let hashes: Vec<u64> = records
                .iter()
                .filter(|r| r.rep == rep && r.method.penalty == penalty && r.error.is_none())
                .map(|r| r.input_hash)
                .collect();
            if hashes.windows(2).any(|w| w[0] != w[1]) {
                return Err(Error::InvalidInput(format!("rep {rep}: solvers saw different inputs")));
            }
        }
    }
    Ok(ExperimentResult {
        rows: aggregate(&cfg.methods(), &records),
        records,
    })
}

/// Result of fitting one method on a single sample with no known truth.
#[derive(Clone, Debug)]
pub struct FitRecord {
    pub method: Method,
    /// On the original scale.
    pub lambda: f64,
    pub bandwidth: f64,
    pub report: SolveReport,
    pub time_s: f64,
}

/// Options for [`fit_sample`].
#[derive(Clone, Debug)]
pub struct FitConfig {
    pub solvers: Vec<Solver>,
    pub penalty: Penalty,
    pub lambda: LambdaChoice,
    pub bandwidth: BandwidthChoice,
    pub ssnal: SolveOptions,
    pub admm: AdmmOptions,
}

/// Transform, weights, λ choice and one cold solve per solver on `sample`.
///
/// Adaptive weights come from [`crate::model_select::adaptive_weights_auto`].
pub fn fit_sample(sample: &RawSample, cfg: &FitConfig) -> Result<Vec<FitRecord>> {
    let prepared = prepare(sample, cfg.bandwidth)?;
    let prob = &prepared.problem;
    let weights = match cfg.penalty {
        Penalty::Lasso => WeightSpec::uniform(prob.p()),
        Penalty::Adaptive => crate::model_select::adaptive_weights_auto(prob, &cfg.ssnal)?,
    };
    let lambda = choose_lambda(prob, &weights, cfg.lambda, &cfg.ssnal)?;
    cfg.solvers
        .iter()
        .map(|&solver| {
            let (report, time_s) = run_method(prob, &weights, lambda, solver, &cfg.ssnal, &cfg.admm)?;
            Ok(FitRecord {
                method: Method {
                    solver,
                    penalty: cfg.penalty,
                },
                lambda: lambda * prob.scale() * prob.scale(),
                bandwidth: prepared.bandwidth,
                report,
                time_s,
            })
        })
        .collect()
}

/// Report rows for single fits; the error columns are NaN without a truth.
pub fn fit_rows(records: &[FitRecord]) -> Vec<AggregateRow> {
    records
        .iter()
        .map(|r| AggregateRow {
            method: r.method.label(),
            re_err: (f64::NAN, f64::NAN),
            nnz: (nnz_estimate(&r.report.beta_hat) as f64, 0.0),
            res: (r.report.res, 0.0),
            time: (r.time_s, 0.0),
            iter: (r.report.outer_iters as f64, 0.0),
        })
        .collect()
}

/// Column roles and category codes for the bundled wage data.
pub const WAGE_SCHEMA: &str = include_str!("../tests/data/wage.schema");

/// Named experiment setups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Table1,
    Table2,
    Fig1,
    Fig2,
    Wage,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Table1, Preset::Table2, Preset::Fig1, Preset::Fig2, Preset::Wage];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Wage => "wage",
        }
    }

    /// Simulation design; `None` for the real-data preset.
    pub fn scenario(self, seed: u64) -> Option<ScenarioSpec> {
        match self {
            Preset::Table1 => Some(ScenarioSpec::table1(seed)),
            Preset::Table2 => Some(ScenarioSpec::table2(seed)),
            Preset::Fig1 => Some(ScenarioSpec::fig1(seed)),
            Preset::Fig2 => Some(ScenarioSpec::fig2(seed)),
            Preset::Wage => None,
        }
    }

    pub fn lambda(self) -> LambdaChoice {
        match self {
            Preset::Table1 | Preset::Table2 => LambdaChoice::Criterion(Criterion::Bic),
            Preset::Fig1 => LambdaChoice::Fixed(0.5),
            Preset::Fig2 => LambdaChoice::Fixed(0.1),
            Preset::Wage => LambdaChoice::Criterion(Criterion::Hbic),
        }
    }

    pub fn solvers(self) -> Vec<Solver> {
        match self {
            Preset::Fig1 => vec![Solver::Ssnal],
            _ => vec![Solver::Ssnal, Solver::Admm],
        }
    }

    pub fn reps(self) -> usize {
        match self {
            Preset::Wage => 1,
            _ => 20,
        }
    }

    pub fn experiment(self, seed: u64, reps: usize) -> Option<ExperimentConfig> {
        let scenario = self.scenario(seed)?;
        Some(ExperimentConfig {
            solvers: self.solvers(),
            ..ExperimentConfig::new(scenario, reps, self.lambda())
        })
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario '{s}'")))
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidInput(format!("unknown format '{s}'"))),
        }
    }
}

pub const COLUMNS: [&str; 11] = [
    "method",
    "re_err_mean",
    "re_err_std",
    "nnz_mean",
    "nnz_std",
    "res_mean",
    "res_std",
    "time_mean",
    "time_std",
    "iter_mean",
    "iter_std",
];

/// C-style `%.6e`: six fraction digits, signed exponent with at least two digits.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let s = format!("{x:.6e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", e.abs())
}

fn parse_sci(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("'{s}' is not a number")))
}

impl AggregateRow {
    fn fields(&self) -> [f64; 10] {
        [
            self.re_err.0,
            self.re_err.1,
            self.nnz.0,
            self.nnz.1,
            self.res.0,
            self.res.1,
            self.time.0,
            self.time.1,
            self.iter.0,
            self.iter.1,
        ]
    }

    fn from_fields(method: String, f: [f64; 10]) -> Self {
        Self {
            method,
            re_err: (f[0], f[1]),
            nnz: (f[2], f[3]),
            res: (f[4], f[5]),
            time: (f[6], f[7]),
            iter: (f[8], f[9]),
        }
    }
}

/// Report text. `provenance` lines, if any, go first as `# ` comments (CSV)
/// or under a `config` object (JSON).
pub fn render_report(rows: &[AggregateRow], format: ReportFormat, provenance: &[(String, String)]) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::new();
            for (k, v) in provenance {
                let _ = writeln!(out, "# {k}={v}");
            }
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for row in rows {
                out.push_str(&row.method);
                for v in row.fields() {
                    out.push(',');
                    out.push_str(&format_sci(v));
                }
                out.push('\n');
            }
            out
        }
        ReportFormat::Json => {
            let mut out = String::from("{\n  \"config\": {");
            for (i, (k, v)) in provenance.iter().enumerate() {
                let sep = if i == 0 { "\n" } else { ",\n" };
                let _ = write!(
                    out,
                    "{sep}    {}: {}",
                    serde_json::Value::from(k.as_str()),
                    serde_json::Value::from(v.as_str())
                );
            }
            out.push_str(if provenance.is_empty() { "},\n" } else { "\n  },\n" });
            out.push_str("  \"rows\": [");
            for (i, row) in rows.iter().enumerate() {
                out.push_str(if i == 0 { "\n    {" } else { ",\n    {" });
                let _ = write!(out, "\"method\": {}", serde_json::Value::from(row.method.as_str()));
                for (name, v) in COLUMNS[1..].iter().zip(row.fields()) {
                    let text = if v.is_finite() {
                        format_sci(v)
                    } else {
                        "null".into()
                    };
                    let _ = write!(out, ", \"{name}\": {text}");
                }
                out.push('}');
            }
            out.push_str(if rows.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
            out
        }
    }
}

pub fn emit_report(
    rows: &[AggregateRow],
    format: ReportFormat,
    path: &Path,
    provenance: &[(String, String)],
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(render_report(rows, format, provenance).as_bytes())?;
    Ok(())
}

/// Reads rows back from [`render_report`] output.
pub fn parse_report(text: &str, format: ReportFormat) -> Result<Vec<AggregateRow>> {
    match format {
        ReportFormat::Csv => {
            let mut lines = text.lines().filter(|l| !l.starts_with('#'));
            let header = lines.next().unwrap_or("");
            if header != COLUMNS.join(",") {
                return Err(Error::InvalidInput(format!("unexpected header '{header}'")));
            }
            lines
                .map(|line| {
                    let parts: Vec<&str> = line.split(',').collect();
                    if parts.len() != COLUMNS.len() {
                        return Err(Error::InvalidInput(format!("bad row '{line}'")));
                    }
                    let mut f = [0.0; 10];
                    for (slot, s) in f.iter_mut().zip(&parts[1..]) {
                        *slot = parse_sci(s)?;
                    }
                    Ok(AggregateRow::from_fields(parts[0].to_string(), f))
                })
                .collect()
        }
        ReportFormat::Json => {
            let v: serde_json::Value = serde_json::from_str(text)?;
            let rows = v["rows"]
                .as_array()
                .ok_or_else(|| Error::InvalidInput("missing rows array".into()))?;
            rows.iter()
                .map(|r| {
                    let method = r["method"]
                        .as_str()
                        .ok_or_else(|| Error::InvalidInput("row without method".into()))?
                        .to_string();
                    let mut f = [0.0; 10];
                    for (slot, name) in f.iter_mut().zip(&COLUMNS[1..]) {
                        *slot = r[*name].as_f64().unwrap_or(f64::NAN);
                    }
                    Ok(AggregateRow::from_fields(method, f))
                })
                .collect()
        }
    }
}

/// Box-plot data: one row per (rep, nonzero coordinate), indices 1-based.
pub fn render_boxplot(records: &[RepRecord], beta_star: Option<&dyn Fn(u64) -> Vec<f64>>) -> String {
    let mut out = String::from("rep,seed,method,coordinate,estimate,truth\n");
    for r in records {
        let truth = beta_star.map(|f| f(r.seed));
        for &(j, b) in &r.nonzeros {
            let t = truth.as_ref().map(|t| format_sci(t[j])).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.rep,
                r.seed,
                r.method.label(),
                j + 1,
                format_sci(b),
                t
            );
        }
    }
    out
}
