use std::process::ExitCode;

use log::LevelFilter;
use ssnal_plm_cli::{config, run};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cfg = match config::parse_config(&argv) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cfg.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    let outcome = match cfg.threads() {
        Some(t) => ssnal_plm::par::with_threads(t, || run::execute(&cfg)).and_then(|r| r),
        None => run::execute(&cfg),
    };
    match outcome {
        Ok(status) if status.converged => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("warning: at least one solve did not converge; the report is flagged");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
