use std::io;
use std::process::ExitCode;

use clap::Parser;
use emkf_cli::{execute, Cli, ExperimentConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match ExperimentConfig::from_cli(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg, &mut io::stderr()) {
        Ok(report) => {
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            if !report.failures.is_empty() {
                eprintln!("error: {} run(s) failed", report.failures.len());
            }
            ExitCode::from(report.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
