use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ssnal_plm_cli::config::{parse_config_text, settings_from_pairs};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ssnal-plm"))
}

fn wage_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/wage.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn report_body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn lambda_conflict_exits_2() {
    let out = run(&["solve", "--scenario", "table1", "--lambda", "0.5", "--lambda-criterion", "bic"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mutually exclusive"));
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["bench", "--scenario", "table1", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "scenario = table1\nrepetitions = 3\n").unwrap();
    let out = run(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("repetitions"));
}

#[test]
fn table1_single_rep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t1.csv");
    let out = run(&["bench", "--scenario", "table1", "--reps", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let body = report_body(&text);
    assert_eq!(body.len(), 3);
    assert!(body[1].starts_with("SSNAL_a,"));
    assert!(body[2].starts_with("ADMM_a,"));
    assert!(text.contains("# seed=1\n"));
    assert!(text.contains("# status=ok\n"));
}

#[test]
fn forced_single_outer_iteration_exits_1_with_flag() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t2.csv");
    let out = run(&[
        "solve",
        "--scenario",
        "table2",
        "--method",
        "ssnal",
        "--max-outer",
        "1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("# status=not_converged\n"));
    assert_eq!(report_body(&text).len(), 2);
}

#[test]
fn wage_selects_five_covariates() {
    let dir = tempfile::tempdir().unwrap();
    let coef = dir.path().join("coef.csv");
    let out = run(&[
        "solve",
        "--scenario",
        "wage",
        "--csv",
        wage_csv().to_str().unwrap(),
        "--method",
        "ssnal",
        "--coef",
        coef.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("# selected.SSNAL_a=age race jobclass health health_ins\n"), "{report}");
    let coef = std::fs::read_to_string(coef).unwrap();
    assert_eq!(coef.lines().count(), 7);
    assert!(coef.contains("SSNAL_a,2,maritl,0.000000e+00"));
}

#[test]
fn repeated_runs_match_except_time() {
    let strip = |text: &str| -> Vec<String> {
        text.lines()
            .map(|l| {
                if l.starts_with('#') {
                    return l.to_string();
                }
                let f: Vec<&str> = l.split(',').collect();
                [&f[..7], &f[9..]].concat().join(",")
            })
            .collect()
    };
    let args = ["bench", "--scenario", "table2", "--reps", "2", "--method", "ssnal", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    let (a, b) = (String::from_utf8(a.stdout).unwrap(), String::from_utf8(b.stdout).unwrap());
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn thread_count_does_not_change_results() {
    let strip = |o: Output| -> Vec<String> {
        String::from_utf8(o.stdout)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                [&f[..7], &f[9..]].concat().join(",")
            })
            .collect()
    };
    let base = ["bench", "--scenario", "table2", "--reps", "2", "--method", "ssnal"];
    let one = run(&[&base[..], &["--threads", "1"]].concat());
    let four = run(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(strip(one), strip(four));
}

#[test]
fn config_file_round_trip() {
    let text = "scenario=fig1\n# note\nseed = 12\nformat = JSON\nlambda = 5e-1\n";
    let map = parse_config_text(text).unwrap();
    let settings = settings_from_pairs(map.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
    let normalized = settings.serialize();
    assert_eq!(normalized, "scenario = fig1\nlambda = 0.5\nseed = 12\nformat = json\n");
    let again = parse_config_text(&normalized).unwrap();
    let settings2 = settings_from_pairs(again.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
    assert_eq!(settings2.serialize(), normalized);
}

#[test]
fn transform_writes_one_row_per_observation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tr.csv");
    let out = run(&[
        "transform",
        "--scenario",
        "wage",
        "--csv",
        wage_csv().to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(path).unwrap();
    let body = report_body(&text);
    assert_eq!(body[0], "y_tilde,age,maritl,race,jobclass,health,health_ins");
    assert_eq!(body.len(), 3001);
}
