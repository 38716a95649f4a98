//! Command-line and config-file parsing.
//!
//! Flags and config keys share names: `--lambda-criterion hbic` on the
//! command line is `lambda-criterion = hbic` in a file. Flags win.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};

use ssnal_plm::admm::AdmmOptions;
use ssnal_plm::bench::{BandwidthChoice, LambdaChoice, Penalty, Preset, ReportFormat, Solver};
use ssnal_plm::model_select::Criterion;
use ssnal_plm::ssnal::SolveOptions;

/// A bad flag, key or combination. Reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Fit once and report the estimate.
    Solve,
    /// Fit the whole λ grid and report the information scores.
    Path,
    /// Repeated simulation runs with aggregated metrics.
    Bench,
    /// Write the kernel-transformed data.
    Transform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodSel {
    Ssnal,
    Admm,
    Both,
}

impl MethodSel {
    pub fn solvers(self) -> Vec<Solver> {
        match self {
            MethodSel::Ssnal => vec![Solver::Ssnal],
            MethodSel::Admm => vec![Solver::Admm],
            MethodSel::Both => vec![Solver::Ssnal, Solver::Admm],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodSel::Ssnal => "ssnal",
            MethodSel::Admm => "admm",
            MethodSel::Both => "both",
        }
    }
}

impl FromStr for MethodSel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ssnal" => Ok(MethodSel::Ssnal),
            "admm" => Ok(MethodSel::Admm),
            "both" => Ok(MethodSel::Both),
            _ => Err(format!("expected ssnal, admm or both, got '{s}'")),
        }
    }
}

/// Every key accepted in a config file, in serialization order.
pub const KEYS: [&str; 19] = [
    "scenario",
    "csv",
    "schema",
    "method",
    "penalty",
    "lambda",
    "lambda-criterion",
    "bandwidth",
    "reps",
    "seed",
    "max-outer",
    "tol",
    "admm-max-iters",
    "admm-sigma",
    "out",
    "format",
    "boxplot",
    "coef",
    "threads",
];

#[derive(Parser, Debug)]
#[command(name = "ssnal-plm", version, about = "Adaptive lasso for partially linear models")]
struct Cli {
    command: Command,
    /// Flat `key = value` file; keys are the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// table1, table2, fig1, fig2 or wage.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    csv: Option<String>,
    /// Column roles for --csv; the wage scenario has a built-in one.
    #[arg(long)]
    schema: Option<String>,
    /// ssnal, admm or both.
    #[arg(long)]
    method: Option<String>,
    /// adaptive or lasso.
    #[arg(long)]
    penalty: Option<String>,
    /// Fixed λ on the scale of the input data.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// bic or hbic.
    #[arg(long)]
    lambda_criterion: Option<String>,
    /// A positive number or `cv`.
    #[arg(long)]
    bandwidth: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    max_outer: Option<String>,
    /// Stopping tolerance on the relative KKT residual, both solvers.
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    admm_max_iters: Option<String>,
    #[arg(long)]
    admm_sigma: Option<String>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
    /// csv or json; inferred from --out when absent.
    #[arg(long)]
    format: Option<String>,
    /// Per-rep nonzero estimates for box plots (bench).
    #[arg(long)]
    boxplot: Option<String>,
    /// Coefficient table (solve).
    #[arg(long)]
    coef: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// Repeat for more detail: -v outer iterations, -vv inner iterations.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Cli {
    fn flag_pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("scenario", &self.scenario),
            ("csv", &self.csv),
            ("schema", &self.schema),
            ("method", &self.method),
            ("penalty", &self.penalty),
            ("lambda", &self.lambda),
            ("lambda-criterion", &self.lambda_criterion),
            ("bandwidth", &self.bandwidth),
            ("reps", &self.reps),
            ("seed", &self.seed),
            ("max-outer", &self.max_outer),
            ("tol", &self.tol),
            ("admm-max-iters", &self.admm_max_iters),
            ("admm-sigma", &self.admm_sigma),
            ("out", &self.out),
            ("format", &self.format),
            ("boxplot", &self.boxplot),
            ("coef", &self.coef),
            ("threads", &self.threads),
        ]
    }
}

/// Settings as given; unset fields fall back to scenario or built-in defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub scenario: Option<Preset>,
    pub csv: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub method: Option<MethodSel>,
    pub penalty: Option<Penalty>,
    pub lambda: Option<f64>,
    pub lambda_criterion: Option<Criterion>,
    pub bandwidth: Option<BandwidthChoice>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub max_outer: Option<usize>,
    pub tol: Option<f64>,
    pub admm_max_iters: Option<usize>,
    pub admm_sigma: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
    pub boxplot: Option<PathBuf>,
    pub coef: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn parse_val<T: FromStr>(key: &str, v: &str) -> Result<T, UsageError> {
    v.parse()
        .map_err(|_| UsageError(format!("--{key}: cannot parse '{v}'")))
}

fn positive(key: &str, v: &str) -> Result<f64, UsageError> {
    let x: f64 = parse_val(key, v)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        usage(format!("--{key}: expected a positive number, got '{v}'"))
    }
}

fn at_least_one(key: &str, v: &str) -> Result<usize, UsageError> {
    let x: usize = parse_val(key, v)?;
    if x == 0 {
        return usage(format!("--{key}: must be at least 1"));
    }
    Ok(x)
}

impl Settings {
    fn set(&mut self, key: &str, v: &str) -> Result<(), UsageError> {
        let v = v.trim();
        match key {
            "scenario" => self.scenario = Some(v.parse().map_err(|_| UsageError(format!("--scenario: unknown scenario '{v}'")))?),
            "csv" => self.csv = Some(PathBuf::from(v)),
            "schema" => self.schema = Some(PathBuf::from(v)),
            "method" => self.method = Some(v.parse().map_err(|e| UsageError(format!("--method: {e}")))?),
            "penalty" => self.penalty = Some(parse_val(key, v)?),
            "lambda" => {
                let x: f64 = parse_val(key, v)?;
                if !(x >= 0.0 && x.is_finite()) {
                    return usage(format!("--lambda: expected a nonnegative number, got '{v}'"));
                }
                self.lambda = Some(x)
            }
            "lambda-criterion" => self.lambda_criterion = Some(parse_val(key, v)?),
            "bandwidth" => {
                self.bandwidth = Some(if v.eq_ignore_ascii_case("cv") {
                    BandwidthChoice::Cv
                } else {
                    BandwidthChoice::Fixed(positive(key, v)?)
                })
            }
            "reps" => self.reps = Some(at_least_one(key, v)?),
            "seed" => self.seed = Some(parse_val(key, v)?),
            "max-outer" => self.max_outer = Some(at_least_one(key, v)?),
            "tol" => self.tol = Some(positive(key, v)?),
            "admm-max-iters" => self.admm_max_iters = Some(at_least_one(key, v)?),
            "admm-sigma" => self.admm_sigma = Some(positive(key, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "format" => self.format = Some(parse_val(key, v)?),
            "boxplot" => self.boxplot = Some(PathBuf::from(v)),
            "coef" => self.coef = Some(PathBuf::from(v)),
            "threads" => self.threads = Some(at_least_one(key, v)?),
            _ => return usage(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// `key = value` lines for the fields that are set, in [`KEYS`] order.
    pub fn serialize(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let values: [Option<String>; 19] = [
            self.scenario.map(|s| s.name().to_string()),
            path(&self.csv),
            path(&self.schema),
            self.method.map(|m| m.name().to_string()),
            self.penalty.map(|p| p.name().to_string()),
            self.lambda.map(|x| x.to_string()),
            self.lambda_criterion.map(|c| c.to_string()),
            self.bandwidth.map(|b| match b {
                BandwidthChoice::Cv => "cv".to_string(),
                BandwidthChoice::Fixed(h) => h.to_string(),
            }),
            self.reps.map(|x| x.to_string()),
            self.seed.map(|x| x.to_string()),
            self.max_outer.map(|x| x.to_string()),
            self.tol.map(|x| x.to_string()),
            self.admm_max_iters.map(|x| x.to_string()),
            self.admm_sigma.map(|x| x.to_string()),
            path(&self.out),
            self.format.map(|f| match f {
                ReportFormat::Csv => "csv".to_string(),
                ReportFormat::Json => "json".to_string(),
            }),
            path(&self.boxplot),
            path(&self.coef),
            self.threads.map(|x| x.to_string()),
        ];
        KEYS.iter()
            .zip(values)
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect()
    }
}

/// Reads `key = value` lines; `#` starts a comment line.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return usage(format!("config line {}: expected key = value", i + 1));
        };
        let key = k.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return usage(format!("config line {}: unknown key '{key}'", i + 1));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return usage(format!("config line {}: duplicate key '{key}'", i + 1));
        }
    }
    Ok(out)
}

/// Applies key/value pairs in order, then checks cross-field consistency.
pub fn settings_from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Settings, UsageError> {
    let mut s = Settings::default();
    for (k, v) in pairs {
        s.set(k, v)?;
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub settings: Settings,
    pub verbose: u8,
}

/// Parses `argv` (program name first), merging `--config` underneath the flags.
pub fn parse_config(argv: &[String]) -> Result<RunConfig, clap::Error> {
    let cli = Cli::try_parse_from(argv)?;
    let to_clap = |e: UsageError| clap::Error::raw(clap::error::ErrorKind::ValueValidation, format!("{e}\n"));
    let mut merged: BTreeMap<String, String> = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                clap::Error::raw(clap::error::ErrorKind::Io, format!("--config {}: {e}\n", path.display()))
            })?;
            parse_config_text(&text).map_err(to_clap)?
        }
        None => BTreeMap::new(),
    };
    let mut explicit_lambda = false;
    let mut explicit_criterion = false;
    for (k, v) in cli.flag_pairs() {
        if let Some(v) = v {
            explicit_lambda |= k == "lambda";
            explicit_criterion |= k == "lambda-criterion";
            merged.insert(k.to_string(), v.clone());
        }
    }
    // a flag replaces the other half of the pair when the file set it
    if explicit_lambda && !explicit_criterion {
        merged.remove("lambda-criterion");
    }
    if explicit_criterion && !explicit_lambda {
        merged.remove("lambda");
    }
    let ordered: Vec<(&str, &str)> = KEYS
        .iter()
        .filter_map(|k| merged.get(*k).map(|v| (*k, v.as_str())))
        .collect();
    let settings = settings_from_pairs(ordered).map_err(to_clap)?;
    let cfg = RunConfig {
        command: cli.command,
        settings,
        verbose: cli.verbose,
    };
    cfg.check().map_err(to_clap)?;
    Ok(cfg)
}

/// Where the data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Synthetic(Preset),
    Csv { path: PathBuf, schema: Option<PathBuf> },
}

impl RunConfig {
    fn check(&self) -> Result<(), UsageError> {
        let s = &self.settings;
        if s.lambda.is_some() && s.lambda_criterion.is_some() {
            return usage("--lambda and --lambda-criterion are mutually exclusive");
        }
        match (s.scenario, &s.csv) {
            (None, None) => return usage("one of --scenario or --csv is required"),
            (Some(Preset::Wage), None) => return usage("--scenario wage needs --csv with the wage data"),
            (Some(p), Some(_)) if p != Preset::Wage => {
                return usage(format!("--csv cannot be combined with the simulated scenario '{p}'"))
            }
            (None, Some(_)) if s.schema.is_none() => return usage("--csv needs --schema"),
            _ => {}
        }
        if self.command == Command::Bench && s.csv.is_some() && s.reps.is_some_and(|r| r > 1) {
            return usage("--reps > 1 needs a simulated scenario");
        }
        if s.boxplot.is_some() && self.command != Command::Bench {
            return usage("--boxplot applies to bench only");
        }
        if s.coef.is_some() && self.command != Command::Solve {
            return usage("--coef applies to solve only");
        }
        if matches!(self.command, Command::Path | Command::Transform) && s.format == Some(ReportFormat::Json) {
            return usage("path and transform write CSV only");
        }
        Ok(())
    }

    pub fn input(&self) -> Input {
        match (&self.settings.csv, self.settings.scenario) {
            (Some(path), _) => Input::Csv {
                path: path.clone(),
                schema: self.settings.schema.clone(),
            },
            (None, Some(p)) => Input::Synthetic(p),
            (None, None) => unreachable!("checked in parse_config"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.settings.seed.unwrap_or(1)
    }

    pub fn solvers(&self) -> Vec<Solver> {
        match (self.settings.method, self.settings.scenario) {
            (Some(m), _) => m.solvers(),
            (None, Some(p)) => p.solvers(),
            (None, None) => vec![Solver::Ssnal],
        }
    }

    pub fn penalty(&self) -> Penalty {
        self.settings.penalty.unwrap_or(Penalty::Adaptive)
    }

    pub fn lambda(&self) -> LambdaChoice {
        let s = &self.settings;
        match (s.lambda, s.lambda_criterion, s.scenario) {
            (Some(l), _, _) => LambdaChoice::Fixed(l),
            (None, Some(c), _) => LambdaChoice::Criterion(c),
            (None, None, Some(p)) => p.lambda(),
            (None, None, None) => LambdaChoice::Criterion(Criterion::Bic),
        }
    }

    pub fn criterion(&self) -> Criterion {
        match self.lambda() {
            LambdaChoice::Criterion(c) => c,
            LambdaChoice::Fixed(_) => self.settings.lambda_criterion.unwrap_or(Criterion::Bic),
        }
    }

    pub fn bandwidth(&self) -> BandwidthChoice {
        self.settings.bandwidth.unwrap_or(BandwidthChoice::Cv)
    }

    pub fn reps(&self) -> usize {
        match (self.settings.reps, self.settings.scenario) {
            (Some(r), _) => r,
            (None, Some(p)) if self.command == Command::Bench => p.reps(),
            _ => 1,
        }
    }

    pub fn ssnal_options(&self) -> SolveOptions {
        let mut o = SolveOptions::default();
        if let Some(m) = self.settings.max_outer {
            o.max_outer = m;
        }
        if let Some(t) = self.settings.tol {
            o.res_tol = t;
        }
        o
    }

    pub fn admm_options(&self) -> AdmmOptions {
        let mut o = AdmmOptions::default();
        if let Some(m) = self.settings.admm_max_iters {
            o.max_iters = m;
        }
        if let Some(t) = self.settings.tol {
            o.res_tol = t;
        }
        if let Some(s) = self.settings.admm_sigma {
            o.sigma = s;
        }
        o
    }

    pub fn format(&self) -> ReportFormat {
        match (self.settings.format, &self.settings.out) {
            (Some(f), _) => f,
            (None, Some(p)) if has_ext(p, "json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }

    pub fn threads(&self) -> Option<usize> {
        self.settings.threads
    }

    /// Every setting after defaults, for the report header.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let mut out = vec![("command".to_string(), format!("{:?}", self.command).to_lowercase())];
        match self.input() {
            Input::Synthetic(p) => out.push(("scenario".into(), p.name().into())),
            Input::Csv { path, schema } => {
                if let Some(p) = self.settings.scenario {
                    out.push(("scenario".into(), p.name().into()));
                }
                out.push(("csv".into(), path.display().to_string()));
                out.push((
                    "schema".into(),
                    schema.map(|s| s.display().to_string()).unwrap_or_else(|| "built-in".into()),
                ));
            }
        }
        let method = self
            .solvers()
            .iter()
            .map(|s| format!("{s:?}").to_lowercase())
            .collect::<Vec<_>>()
            .join("+");
        out.push(("method".into(), method));
        out.push(("penalty".into(), self.penalty().name().into()));
        match self.lambda() {
            LambdaChoice::Fixed(l) => out.push(("lambda".into(), l.to_string())),
            LambdaChoice::Criterion(c) => out.push(("lambda-criterion".into(), c.to_string())),
        }
        out.push((
            "bandwidth".into(),
            match self.bandwidth() {
                BandwidthChoice::Cv => "cv".into(),
                BandwidthChoice::Fixed(h) => h.to_string(),
            },
        ));
        out.push(("reps".into(), self.reps().to_string()));
        out.push(("seed".into(), self.seed().to_string()));
        let so = self.ssnal_options();
        let ao = self.admm_options();
        out.push(("max-outer".into(), so.max_outer.to_string()));
        out.push(("tol".into(), so.res_tol.to_string()));
        out.push(("admm-max-iters".into(), ao.max_iters.to_string()));
        out.push(("admm-sigma".into(), ao.sigma.to_string()));
        out
    }
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}
