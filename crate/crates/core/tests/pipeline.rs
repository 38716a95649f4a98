use std::io::Write;

use ssnal_plm::admm::{admm_solve, AdmmOptions};
use ssnal_plm::bench::{
    fit_sample, penalty_weights, prepare, run_experiment, BandwidthChoice, ExperimentConfig, FitConfig,
    LambdaChoice, Penalty, Solver,
};
use ssnal_plm::datagen::{generate, load_csv, CsvSchema, ScenarioSpec};
use ssnal_plm::linalg::norm_inf;
use ssnal_plm::model_select::{lambda_grid, log_grid, select_index, solve_path, Criterion, WeightSpec};
use ssnal_plm::ssnal::{ssnal_solve, SolveOptions};
use ssnal_plm::{Error, TransformedProblem};

fn small_table1(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        n: 200,
        p: 40,
        nnz: 5,
        ..ScenarioSpec::table1(seed)
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let a = generate(&small_table1(3)).unwrap();
    let b = generate(&small_table1(3)).unwrap();
    let c = generate(&small_table1(4)).unwrap();
    assert_eq!(a.sample.x, b.sample.x);
    assert_eq!(a.beta_star, b.beta_star);
    assert_ne!(a.sample.y, c.sample.y);
}

#[test]
fn warm_and_cold_paths_agree() {
    let inst = generate(&small_table1(1)).unwrap();
    let prob = prepare(&inst.sample, BandwidthChoice::Fixed(0.2)).unwrap().problem;
    let weights = penalty_weights(&prob, Penalty::Adaptive, None).unwrap();
    let top = lambda_grid(&prob).unwrap()[0];
    let grid = log_grid(top * 1e-3, 1e-4, 15);
    let opts = SolveOptions::default();
    let warm = solve_path(&prob, &weights, &grid, &opts, Criterion::Bic, true).unwrap();
    let cold = solve_path(&prob, &weights, &grid, &opts, Criterion::Bic, false).unwrap();
    for (w, c) in warm.reports.iter().zip(&cold.reports) {
        assert!(w.converged && c.converged);
        let diff = w
            .beta_hat
            .iter()
            .zip(&c.beta_hat)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-4 * (1.0 + norm_inf(&c.beta_hat)), "diff {diff}");
    }
    assert_eq!(select_index(&warm).unwrap(), select_index(&cold).unwrap());
}

#[test]
fn both_solvers_agree_at_selected_lambda() {
    let inst = generate(&small_table1(2)).unwrap();
    let prob = prepare(&inst.sample, BandwidthChoice::Cv).unwrap().problem;
    let weights = WeightSpec::uniform(prob.p());
    let lam = 0.05 * norm_inf(&prob.xty());
    let radii = weights.radii(lam).unwrap();
    let s = ssnal_solve(&prob, &radii, &SolveOptions::default(), None).unwrap();
    let a = admm_solve(&prob, &radii, &AdmmOptions::default()).unwrap();
    assert!(s.converged && a.converged);
    let big: Vec<usize> = (0..prob.p()).filter(|&j| a.beta_hat[j].abs() > 1e-6).collect();
    assert_eq!(s.support(), big);
    for (x, y) in s.beta_hat.iter().zip(&a.beta_hat) {
        assert!((x - y).abs() < 1e-3 * (1.0 + x.abs()));
    }
    assert!(s.outer_iters < a.outer_iters);
}

#[test]
fn experiment_records_every_cell() {
    let mut cfg = ExperimentConfig::new(small_table1(10), 3, LambdaChoice::Criterion(Criterion::Bic));
    cfg.penalties = vec![Penalty::Adaptive, Penalty::Lasso];
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.records.len(), 3 * 4);
    assert_eq!(
        result.rows.iter().map(|r| r.method.as_str()).collect::<Vec<_>>(),
        ["SSNAL_a", "ADMM_a", "SSNAL_l", "ADMM_l"]
    );
    for rep in 0..3 {
        let cells: Vec<_> = result.records.iter().filter(|r| r.rep == rep).collect();
        assert_eq!(cells[0].input_hash, cells[1].input_hash);
        assert_eq!(cells[2].input_hash, cells[3].input_hash);
        assert_ne!(cells[0].input_hash, cells[2].input_hash);
        assert_eq!(cells[0].seed, 10 + rep as u64);
    }
    assert!(result.all_converged());
}

#[test]
fn sequential_and_concurrent_reps_match() {
    let mut cfg = ExperimentConfig::new(small_table1(20), 3, LambdaChoice::Fixed(1.0));
    cfg.solvers = vec![Solver::Ssnal];
    let par = run_experiment(&cfg).unwrap();
    cfg.parallel_reps = false;
    let seq = run_experiment(&cfg).unwrap();
    for (a, b) in par.records.iter().zip(&seq.records) {
        assert_eq!(a.nonzeros, b.nonzeros);
        assert_eq!(a.input_hash, b.input_hash);
    }
}

#[test]
fn zero_reps_rejected() {
    let cfg = ExperimentConfig::new(small_table1(1), 0, LambdaChoice::Fixed(1.0));
    assert!(matches!(run_experiment(&cfg), Err(Error::InvalidInput(_))));
}

fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::File::create(&path).unwrap().write_all(text.as_bytes()).unwrap();
    path
}

#[test]
fn csv_fit_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::from("a,b,c,t,y\n");
    for i in 0..120 {
        let a = ((i * 37) % 17) as f64 / 17.0;
        let b = ((i * 11) % 13) as f64 / 13.0;
        let c = ((i * 5) % 7) as f64 / 7.0;
        let t = (i as f64 + 0.5) / 120.0;
        let noise = 0.01 * ((i * 29) % 23) as f64 / 23.0;
        let y = 3.0 * a - 2.0 * c + (2.0 * std::f64::consts::PI * t).sin() + noise;
        rows.push_str(&format!("{a},{b},{c},{t},{y}\n"));
    }
    let csv = write_tmp(&dir, "d.csv", &rows);
    let schema = CsvSchema::parse("a = x\nb = x\nc = x\nt = t\ny = y\n").unwrap();
    let sample = load_csv(&csv, &schema).unwrap();
    let fits = fit_sample(
        &sample,
        &FitConfig {
            solvers: vec![Solver::Ssnal, Solver::Admm],
            penalty: Penalty::Adaptive,
            lambda: LambdaChoice::Criterion(Criterion::Bic),
            bandwidth: BandwidthChoice::Cv,
            ssnal: SolveOptions::default(),
            admm: AdmmOptions::default(),
        },
    )
    .unwrap();
    assert_eq!(fits.len(), 2);
    assert_eq!(fits[0].report.support(), vec![0, 2]);
    assert!(fits[0].report.beta_hat[0] > 0.0 && fits[0].report.beta_hat[2] < 0.0);
    assert_eq!(fits[0].lambda, fits[1].lambda);
}

#[test]
fn csv_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_tmp(&dir, "bad.csv", "x,t,y\n1,0.1,2\noops,0.2,3\n");
    let schema = CsvSchema::parse("x = x\nt = t\ny = y\n").unwrap();
    match load_csv(&csv, &schema) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(matches!(CsvSchema::parse("x = z\n"), Err(Error::Schema(_))));
}

#[test]
fn lambda_grid_needs_signal() {
    let xt = ssnal_plm::DenseMatrix::from_fn(2, 5, |i, j| (i + j) as f64);
    let prob = TransformedProblem::new(xt, vec![0.0; 5]).unwrap();
    assert!(matches!(lambda_grid(&prob), Err(Error::ZeroCorrelation)));
}
