//! Synthetic designs for the simulation studies and CSV ingestion for real data.
//!
//! Every instance draws its covariates, `T`, noise and support from separate
//! ChaCha20 streams of the same seed, so changing for example `nnz` leaves the
//! design untouched.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::smoothing::RawSample;

const STREAM_X: u64 = 1;
const STREAM_T: u64 = 2;
const STREAM_EPS: u64 = 3;
const STREAM_SUPPORT: u64 = 4;

/// Lag correlation of the low-dimensional covariates.
pub const AR_RHO: f64 = 0.7;
/// Neighbour weight in the high-dimensional mixing.
pub const MIX: f64 = 0.7;

/// Figure 1 coefficients as `(1-based index, value)`.
pub const FIG1_BETA: [(usize, f64); 10] = [
    (55, 9.0),
    (83, -5.0),
    (96, -7.0),
    (251, 3.0),
    (315, -6.0),
    (368, 1.0),
    (404, 10.0),
    (456, -8.0),
    (465, 2.0),
    (482, 7.0),
];

/// Figure 2 coefficients as `(1-based index, value)`.
pub const FIG2_BETA: [(usize, f64); 10] = [
    (104, 5.0),
    (572, 2.0),
    (1746, -4.0),
    (2947, -3.0),
    (4065, -5.0),
    (5092, 4.0),
    (5112, -1.0),
    (6680, 1.0),
    (7979, -2.0),
    (8460, 3.0),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    LowDimFixed,
    LowDimUniform,
    HighDimFixed,
    HighDimUniform,
}

impl ScenarioKind {
    pub fn is_low_dim(self) -> bool {
        matches!(self, ScenarioKind::LowDimFixed | ScenarioKind::LowDimUniform)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub nnz: usize,
    /// Range of the random nonzero values for the uniform kinds.
    pub value_interval: (f64, f64),
    /// `(0-based index, value)` pairs for the fixed kinds.
    pub fixed_beta: Vec<(usize, f64)>,
}

fn zero_based(list: &[(usize, f64)]) -> Vec<(usize, f64)> {
    list.iter().map(|&(j, b)| (j - 1, b)).collect()
}

/// `a = 5√(2 log p / n)`; nonzeros are drawn from `[a, 100a]`.
pub fn highdim_interval(n: usize, p: usize) -> (f64, f64) {
    let a = 5.0 * (2.0 * (p as f64).ln() / n as f64).sqrt();
    (a, 100.0 * a)
}

impl ScenarioSpec {
    pub fn table1(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::LowDimUniform,
            n: 1000,
            p: 500,
            seed,
            nnz: 20,
            value_interval: (0.0, 20.0),
            fixed_beta: vec![],
        }
    }

    pub fn table2(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::HighDimUniform,
            n: 500,
            p: 1000,
            seed,
            nnz: 20,
            value_interval: highdim_interval(500, 1000),
            fixed_beta: vec![],
        }
    }

    pub fn fig1(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::LowDimFixed,
            n: 10_000,
            p: 500,
            seed,
            nnz: FIG1_BETA.len(),
            value_interval: (0.0, 0.0),
            fixed_beta: zero_based(&FIG1_BETA),
        }
    }

    pub fn fig2(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::HighDimFixed,
            n: 300,
            p: 10_000,
            seed,
            nnz: FIG2_BETA.len(),
            value_interval: (0.0, 0.0),
            fixed_beta: zero_based(&FIG2_BETA),
        }
    }

    /// Figure 2 design with `p` covariates; positions are mapped proportionally.
    pub fn fig2_scaled(seed: u64, p: usize) -> Self {
        let fixed_beta = FIG2_BETA
            .iter()
            .map(|&(j, b)| ((j - 1) * p / 10_000, b))
            .collect();
        Self {
            p,
            fixed_beta,
            ..Self::fig2(seed)
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 {
            return Err(Error::InvalidInput(format!("n = {}, p = {}", self.n, self.p)));
        }
        if self.nnz > self.p {
            return Err(Error::InvalidInput(format!("nnz = {} exceeds p = {}", self.nnz, self.p)));
        }
        if self.kind == ScenarioKind::HighDimUniform || self.kind == ScenarioKind::LowDimUniform {
            let (lo, hi) = self.value_interval;
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidInput(format!("value interval [{lo}, {hi}]")));
            }
        } else {
            let mut seen = vec![false; self.p];
            for &(j, b) in &self.fixed_beta {
                if j >= self.p || seen[j] || b == 0.0 {
                    return Err(Error::InvalidInput(format!("bad fixed coefficient ({j}, {b})")));
                }
                seen[j] = true;
            }
            if self.fixed_beta.len() != self.nnz {
                return Err(Error::InvalidInput("nnz must equal the number of fixed coefficients".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GFunction {
    Sin2Pi,
    Cos2Pi,
}

impl GFunction {
    pub fn eval(self, t: f64) -> f64 {
        let a = 2.0 * std::f64::consts::PI * t;
        match self {
            GFunction::Sin2Pi => a.sin(),
            GFunction::Cos2Pi => a.cos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticInstance {
    pub sample: RawSample,
    pub beta_star: Vec<f64>,
    pub g: GFunction,
    pub eps: Vec<f64>,
}

impl SyntheticInstance {
    pub fn support(&self) -> Vec<usize> {
        self.beta_star
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// `Xᵀβ* + g(T) + ε` recomputed from the stored parts.
    pub fn model_response(&self) -> Vec<f64> {
        compose_response(&self.sample.x, &self.sample.t, &self.beta_star, self.g, &self.eps)
    }
}

fn stream(seed: u64, k: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn normals(rng: &mut ChaCha20Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn compose_response(x: &DenseMatrix, t: &[f64], beta: &[f64], g: GFunction, eps: &[f64]) -> Vec<f64> {
    let fit = x.tr_mul_vec(beta);
    fit.iter()
        .zip(t)
        .zip(eps)
        .map(|((f, ti), e)| f + g.eval(*ti) + e)
        .collect()
}

fn draw_beta(spec: &ScenarioSpec) -> Vec<f64> {
    let mut beta = vec![0.0; spec.p];
    match spec.kind {
        ScenarioKind::LowDimFixed | ScenarioKind::HighDimFixed => {
            for &(j, b) in &spec.fixed_beta {
                beta[j] = b;
            }
        }
        ScenarioKind::LowDimUniform | ScenarioKind::HighDimUniform => {
            let mut rng = stream(spec.seed, STREAM_SUPPORT);
            let mut pos = index::sample(&mut rng, spec.p, spec.nnz).into_vec();
            pos.sort_unstable();
            let (lo, hi) = spec.value_interval;
            for j in pos {
                // a draw of exactly zero would shrink the support
                let mut b = 0.0;
                while b == 0.0 {
                    b = lo + (hi - lo) * rng.random::<f64>();
                }
                beta[j] = b;
            }
        }
    }
    beta
}

/// Sample columns drawn from `N(0, Σ)` with `Σ_ij = 0.7^|i−j|` (`p × p`).
///
/// Uses the banded Cholesky factor of the AR(1) matrix:
/// `x₁ = z₁`, `x_j = 0.7 x_{j−1} + √(1 − 0.49) z_j`.
pub fn ar1_design(p: usize, n: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    let c = (1.0 - AR_RHO * AR_RHO).sqrt();
    let mut x = DenseMatrix::zeros(p, n);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            let v = if j == 0 { z } else { AR_RHO * prev + c * z };
            x.set(j, i, v);
            prev = v;
        }
    }
    x
}

/// `X̄` with i.i.d. standard normal entries, `p × n`.
pub fn latent_design(p: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut rng = stream(seed, STREAM_X);
    DenseMatrix::from_row_major(p, n, normals(&mut rng, p * n)).expect("sized buffer")
}

/// `X_1 = X̄_1`, `X_n = X̄_n`, `X_j = X̄_j + 0.7 (X̄_{j+1} + X̄_{j−1})` over sample columns.
pub fn mix_columns(latent: &DenseMatrix) -> DenseMatrix {
    let (p, n) = (latent.rows(), latent.cols());
    let mut x = latent.clone();
    for r in 0..p {
        let src = latent.row(r);
        let dst = x.row_mut(r);
        for j in 1..n.saturating_sub(1) {
            dst[j] = src[j] + MIX * (src[j + 1] + src[j - 1]);
        }
    }
    x
}

fn finish_instance(spec: &ScenarioSpec, x: DenseMatrix, g: GFunction) -> Result<SyntheticInstance> {
    let mut rt = stream(spec.seed, STREAM_T);
    let t: Vec<f64> = (0..spec.n).map(|_| rt.random::<f64>()).collect();
    let mut re = stream(spec.seed, STREAM_EPS);
    let eps = normals(&mut re, spec.n);
    let beta_star = draw_beta(spec);
    let y = compose_response(&x, &t, &beta_star, g, &eps);
    Ok(SyntheticInstance {
        sample: RawSample::new(x, t, y)?,
        beta_star,
        g,
        eps,
    })
}

/// Low-dimensional design with `g(t) = sin 2πt`.
pub fn gen_lowdim(spec: &ScenarioSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    if !spec.kind.is_low_dim() {
        return Err(Error::InvalidInput(format!("{:?} is not a low-dimensional scenario", spec.kind)));
    }
    let mut rx = stream(spec.seed, STREAM_X);
    let x = ar1_design(spec.p, spec.n, &mut rx);
    finish_instance(spec, x, GFunction::Sin2Pi)
}

/// High-dimensional design with `g(t) = cos 2πt`.
pub fn gen_highdim(spec: &ScenarioSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    if spec.kind.is_low_dim() {
        return Err(Error::InvalidInput(format!("{:?} is not a high-dimensional scenario", spec.kind)));
    }
    let x = mix_columns(&latent_design(spec.p, spec.n, spec.seed));
    finish_instance(spec, x, GFunction::Cos2Pi)
}

pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticInstance> {
    if spec.kind.is_low_dim() {
        gen_lowdim(spec)
    } else {
        gen_highdim(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    X,
    T,
    Y,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub role: Role,
    /// Label → numeric code; empty for numeric columns.
    pub codes: Vec<(String, f64)>,
}

/// Maps CSV columns to roles and categorical codings.
///
/// Text form, one column per line, `#` starts a comment:
///
/// ```text
/// age = x
/// race = x | 1. White:4 | 2. Black:2 | 3. Asian:3 | 4. Other:1
/// education = t | 1. < HS Grad:1 | 2. HS Grad:2
/// wage = y
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub columns: Vec<ColumnSpec>,
}

impl CsvSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Schema(format!("line {}: {msg}", lineno + 1));
            let (name, rest) = line
                .split_once('=')
                .ok_or_else(|| err("expected 'column = role'".into()))?;
            let mut parts = rest.split('|').map(str::trim);
            let role = match parts.next().unwrap_or("").to_ascii_lowercase().as_str() {
                "x" => Role::X,
                "t" => Role::T,
                "y" => Role::Y,
                other => return Err(err(format!("unknown role '{other}'"))),
            };
            let mut codes = Vec::new();
            for part in parts {
                let (label, code) = part
                    .rsplit_once(':')
                    .ok_or_else(|| err(format!("expected 'label:code', got '{part}'")))?;
                let code: f64 = code
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("code '{code}' is not a number")))?;
                codes.push((label.trim().to_string(), code));
            }
            columns.push(ColumnSpec {
                name: name.trim().to_string(),
                role,
                codes,
            });
        }
        let count = |r: Role| columns.iter().filter(|c| c.role == r).count();
        if count(Role::T) != 1 || count(Role::Y) != 1 || count(Role::X) == 0 {
            return Err(Error::Schema(
                "schema needs exactly one t column, one y column and at least one x column".into(),
            ));
        }
        Ok(Self { columns })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn x_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.role == Role::X)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn decode(col: &ColumnSpec, field: &str) -> std::result::Result<f64, String> {
    let field = field.trim();
    if col.codes.is_empty() {
        let v: f64 = field
            .parse()
            .map_err(|_| format!("column '{}': '{field}' is not a number", col.name))?;
        if !v.is_finite() {
            return Err(format!("column '{}': non-finite value", col.name));
        }
        return Ok(v);
    }
    col.codes
        .iter()
        .find(|(label, _)| label == field)
        .map(|(_, c)| *c)
        .ok_or_else(|| format!("column '{}': label '{field}' not in schema", col.name))
}

/// Reads a CSV, standardizes each covariate to mean 0 and unit variance and
/// maps `T` affinely onto `[0, 1]`.
///
/// Rows with an empty field in a used column are skipped.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<RawSample> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let lookup: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let pos = lookup
            .get(col.name.as_str())
            .ok_or_else(|| Error::Schema(format!("column '{}' not found in {}", col.name, path.display())))?;
        positions.push(*pos);
    }

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); schema.columns.len()];
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        let fields: Option<Vec<&str>> = positions.iter().map(|&i| record.get(i)).collect();
        let Some(fields) = fields else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: "missing fields".into(),
            });
        };
        if fields.iter().any(|f| f.trim().is_empty()) {
            continue;
        }
        let row = schema
            .columns
            .iter()
            .zip(&fields)
            .map(|(c, f)| decode(c, f))
            .collect::<std::result::Result<Vec<f64>, String>>()
            .map_err(|msg| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            })?;
        for (dst, v) in values.iter_mut().zip(row) {
            dst.push(v);
        }
    }

    let n = values[0].len();
    if n < 2 {
        return Err(Error::Schema(format!("{} has fewer than two complete rows", path.display())));
    }
    let mut x_rows = Vec::new();
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (col, v) in schema.columns.iter().zip(values) {
        match col.role {
            Role::X => x_rows.push(standardize(&col.name, v)?),
            Role::T => t = rescale_unit(&col.name, v)?,
            Role::Y => y = v,
        }
    }
    let p = x_rows.len();
    let x = DenseMatrix::from_row_major(p, n, x_rows.concat())?;
    RawSample::new(x, t, y)
}

/// Mean 0 and unit sample variance (divisor `n − 1`).
pub fn standardize(name: &str, mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::Schema(format!("column '{name}' has zero variance")));
    }
    let sd = var.sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    Ok(v)
}

fn rescale_unit(name: &str, mut v: Vec<f64>) -> Result<Vec<f64>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Schema(format!("column '{name}' is constant and cannot serve as t")));
    }
    v.iter_mut().for_each(|x| *x = ((*x - lo) / (hi - lo)).clamp(0.0, 1.0));
    Ok(v)
}
