//! Subcommand execution.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ssnal_plm::bench::{
    fit_rows, fit_sample, format_sci, penalty_weights, prepare, render_boxplot, render_report, run_experiment,
    ExperimentConfig, FitConfig, FitRecord, Penalty, WAGE_SCHEMA,
};
use ssnal_plm::datagen::{generate, load_csv, CsvSchema, SyntheticInstance};
use ssnal_plm::model_select::{adaptive_weights_auto, lambda_grid, select_index, solve_path};
use ssnal_plm::{Error, RawSample, TransformedProblem};

use crate::config::{Command, Input, RunConfig};

/// What a run produced, for the exit code.
pub struct RunStatus {
    pub converged: bool,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

struct Data {
    sample: RawSample,
    names: Vec<String>,
    truth: Option<SyntheticInstance>,
}

fn load(cfg: &RunConfig) -> Result<Data, Error> {
    match cfg.input() {
        Input::Synthetic(preset) => {
            let spec = preset.scenario(cfg.seed()).expect("simulated preset");
            let inst = generate(&spec)?;
            Ok(Data {
                sample: inst.sample.clone(),
                names: (1..=spec.p).map(|j| format!("x{j}")).collect(),
                truth: Some(inst),
            })
        }
        Input::Csv { path, schema } => {
            let schema = match schema {
                Some(s) => CsvSchema::from_file(&s)?,
                None => CsvSchema::parse(WAGE_SCHEMA)?,
            };
            let sample = load_csv(&path, &schema)?;
            Ok(Data {
                sample,
                names: schema.x_names().into_iter().map(String::from).collect(),
                truth: None,
            })
        }
    }
}

pub fn execute(cfg: &RunConfig) -> Result<RunStatus, Error> {
    match cfg.command {
        Command::Transform => transform(cfg),
        Command::Path => path(cfg),
        Command::Solve | Command::Bench => match cfg.input() {
            Input::Synthetic(_) => bench(cfg),
            Input::Csv { .. } => fit_csv(cfg),
        },
    }
}

fn with_status(mut prov: Vec<(String, String)>, converged: bool) -> Vec<(String, String)> {
    prov.push((
        "status".into(),
        if converged { "ok" } else { "not_converged" }.into(),
    ));
    prov
}

fn bench(cfg: &RunConfig) -> Result<RunStatus, Error> {
    let Input::Synthetic(preset) = cfg.input() else {
        unreachable!()
    };
    let spec = preset.scenario(cfg.seed()).expect("simulated preset");
    let exp = ExperimentConfig {
        solvers: cfg.solvers(),
        penalties: vec![cfg.penalty()],
        bandwidth: cfg.bandwidth(),
        ssnal: cfg.ssnal_options(),
        admm: cfg.admm_options(),
        ..ExperimentConfig::new(spec.clone(), cfg.reps(), cfg.lambda())
    };
    let result = run_experiment(&exp)?;
    for r in &result.records {
        if let Some(e) = &r.error {
            log::error!("rep {} {}: {e}", r.rep, r.method.label());
        }
    }
    let converged = result.all_converged();
    let prov = with_status(cfg.provenance(), converged);
    write_out(
        cfg.settings.out.as_deref(),
        &render_report(&result.rows, cfg.format(), &prov),
    )?;
    if let Some(path) = &cfg.settings.boxplot {
        let truth = |seed: u64| {
            generate(&spec.with_seed(seed))
                .map(|i| i.beta_star)
                .unwrap_or_default()
        };
        std::fs::write(path, render_boxplot(&result.records, Some(&truth)))?;
    }
    if let Some(path) = &cfg.settings.coef {
        let mut text = String::from("rep,method,coordinate,estimate\n");
        for r in &result.records {
            for &(j, b) in &r.nonzeros {
                let _ = writeln!(text, "{},{},{},{}", r.rep, r.method.label(), j + 1, format_sci(b));
            }
        }
        std::fs::write(path, text)?;
    }
    Ok(RunStatus { converged })
}

fn fit_csv(cfg: &RunConfig) -> Result<RunStatus, Error> {
    let data = load(cfg)?;
    let fits = fit_sample(
        &data.sample,
        &FitConfig {
            solvers: cfg.solvers(),
            penalty: cfg.penalty(),
            lambda: cfg.lambda(),
            bandwidth: cfg.bandwidth(),
            ssnal: cfg.ssnal_options(),
            admm: cfg.admm_options(),
        },
    )?;
    let converged = fits.iter().all(|f| f.report.converged);
    let mut prov = cfg.provenance();
    if let Some(f) = fits.first() {
        prov.push(("bandwidth-used".into(), format_sci(f.bandwidth)));
        prov.push(("lambda-used".into(), format_sci(f.lambda)));
    }
    for f in &fits {
        prov.push((format!("selected.{}", f.method.label()), selected_names(f, &data.names)));
    }
    let prov = with_status(prov, converged);
    write_out(cfg.settings.out.as_deref(), &render_report(&fit_rows(&fits), cfg.format(), &prov))?;
    if let Some(path) = &cfg.settings.coef {
        let mut text = String::from("method,coordinate,name,estimate\n");
        for f in &fits {
            for (j, b) in f.report.beta_hat.iter().enumerate() {
                let _ = writeln!(text, "{},{},{},{}", f.method.label(), j + 1, data.names[j], format_sci(*b));
            }
        }
        std::fs::write(path, text)?;
    }
    Ok(RunStatus { converged })
}

fn selected_names(fit: &FitRecord, names: &[String]) -> String {
    fit.report
        .support()
        .iter()
        .map(|&j| names[j].as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn transform(cfg: &RunConfig) -> Result<RunStatus, Error> {
    let data = load(cfg)?;
    let prepared = prepare(&data.sample, cfg.bandwidth())?;
    let prob = &prepared.problem;
    let mut text = String::new();
    for (k, v) in cfg.provenance() {
        let _ = writeln!(text, "# {k}={v}");
    }
    let _ = writeln!(text, "# bandwidth-used={}", format_sci(prepared.bandwidth));
    let _ = writeln!(text, "# scale={}", format_sci(prob.scale()));
    text.push_str("y_tilde");
    for name in &data.names {
        let _ = write!(text, ",{name}");
    }
    text.push('\n');
    let xt = prob.xt();
    for i in 0..prob.n() {
        text.push_str(&format_sci(prob.yt()[i]));
        for j in 0..prob.p() {
            text.push(',');
            text.push_str(&format_sci(xt.get(j, i)));
        }
        text.push('\n');
    }
    write_out(cfg.settings.out.as_deref(), &text)?;
    Ok(RunStatus { converged: true })
}

fn path_weights(cfg: &RunConfig, prob: &TransformedProblem, data: &Data) -> Result<ssnal_plm::model_select::WeightSpec, Error> {
    match (cfg.penalty(), &data.truth) {
        (Penalty::Adaptive, None) => adaptive_weights_auto(prob, &cfg.ssnal_options()),
        (penalty, truth) => {
            let support = truth.as_ref().map(|t| t.support());
            penalty_weights(prob, penalty, support.as_deref())
        }
    }
}

fn path(cfg: &RunConfig) -> Result<RunStatus, Error> {
    if cfg.settings.lambda.is_some() {
        log::warn!("--lambda is ignored by path; the full grid is solved");
    }
    let data = load(cfg)?;
    let prepared = prepare(&data.sample, cfg.bandwidth())?;
    let prob = &prepared.problem;
    let weights = path_weights(cfg, prob, &data)?;
    let grid = lambda_grid(prob)?;
    let mode = cfg.criterion();
    let path = solve_path(prob, &weights, &grid, &cfg.ssnal_options(), mode, true)?;
    let best = select_index(&path).ok();
    let converged = path.reports.iter().all(|r| r.converged);
    let s2 = prob.scale() * prob.scale();
    let mut text = String::new();
    for (k, v) in with_status(cfg.provenance(), converged) {
        let _ = writeln!(text, "# {k}={v}");
    }
    text.push_str("index,lambda,score,df,res,outer_iters,converged,selected\n");
    for (k, rep) in path.reports.iter().enumerate() {
        let _ = writeln!(
            text,
            "{k},{},{},{},{},{},{},{}",
            format_sci(path.grid[k] * s2),
            format_sci(path.scores[k]),
            rep.support().len(),
            format_sci(rep.res),
            rep.outer_iters,
            rep.converged,
            best == Some(k)
        );
    }
    write_out(cfg.settings.out.as_deref(), &text)?;
    Ok(RunStatus { converged })
}
