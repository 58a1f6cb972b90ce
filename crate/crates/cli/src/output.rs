//! Trace CSV and summary JSON writers.
//!
//! CSV floats use `{:.16e}` (17 significant digits), so every value
//! round-trips exactly. `est_err` is left empty for agents without a filter.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use emkf_core::{AgentKind, AgentSummary, Episode, StepRecord};
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const CSV_HEADER: &str =
    "t,agent,eps,seed,arm,reward,inst_regret,cum_regret,est_err,a3_monitor,x_norm,xhat_norm";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const RUNS_DIR: &str = "runs";

/// Writes one float with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_row<W: Write>(w: &mut W, eps: f64, seed: u64, r: &StepRecord) -> io::Result<()> {
    let est_err = r.est_err.map(fmt_float).unwrap_or_default();
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.t,
        r.agent,
        fmt_float(eps),
        seed,
        r.arm,
        fmt_float(r.reward),
        fmt_float(r.inst_regret),
        fmt_float(r.cum_regret),
        est_err,
        fmt_float(r.a3_monitor),
        fmt_float(r.x_norm),
        fmt_float(r.xhat_norm),
    )
}

pub fn write_episode<W: Write>(w: &mut W, eps: f64, ep: &Episode) -> io::Result<()> {
    for r in &ep.records {
        write_row(w, eps, ep.seed, r)?;
    }
    Ok(())
}

/// File name of a per-run trace.
pub fn run_file_name(agent: AgentKind, eps: f64, seed: u64) -> String {
    format!("{agent}_eps{eps}_seed{seed}.csv")
}

/// An `io::Error` tagged with the path it concerns.
#[derive(Debug, thiserror::Error)]
#[error("{}: {source}", path.display())]
pub struct PathError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

pub fn at(path: &Path) -> impl FnOnce(io::Error) -> PathError + '_ {
    move |source| PathError {
        path: path.to_path_buf(),
        source,
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>, PathError> {
    File::create(path).map(BufWriter::new).map_err(at(path))
}

/// Writes a per-run CSV with header.
pub fn write_run_file(dir: &Path, eps: f64, ep: &Episode) -> Result<PathBuf, PathError> {
    let path = dir.join(run_file_name(ep.agent, eps, ep.seed));
    let mut w = create(&path)?;
    writeln!(w, "{CSV_HEADER}").map_err(at(&path))?;
    write_episode(&mut w, eps, ep).map_err(at(&path))?;
    w.flush().map_err(at(&path))?;
    Ok(path)
}

/// One `(agent, eps)` entry of summary.json.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub eps: f64,
    #[serde(flatten)]
    pub summary: AgentSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub eps: f64,
    pub agent: AgentKind,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct SummaryFile<'a> {
    pub config: &'a ExperimentConfig,
    pub results: &'a [SummaryEntry],
    pub failures: &'a [RunFailure],
}

pub fn write_summary(path: &Path, file: &SummaryFile<'_>) -> Result<(), PathError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, file)
        .map_err(io::Error::from)
        .map_err(at(path))?;
    writeln!(w).map_err(at(path))?;
    w.flush().map_err(at(path))
}

pub fn ensure_dir(path: &Path) -> Result<(), PathError> {
    fs::create_dir_all(path).map_err(at(path))
}
