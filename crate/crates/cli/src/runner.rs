//! Executes an experiment sweep and writes its artifacts.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use emkf_core::{run_suite, summarize, Episode, SummaryOptions};
use thiserror::Error;

use crate::config::{render, ExperimentConfig};
use crate::output::{
    self, at, create, ensure_dir, write_episode, write_run_file, PathError, RunFailure,
    SummaryEntry, SummaryFile, CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot write output: {0}")]
    Output(#[from] PathError),
    #[error("eps = {eps}: {source}")]
    Suite {
        eps: f64,
        #[source]
        source: emkf_core::Error,
    },
}

/// What a sweep produced.
#[derive(Debug, Default)]
pub struct Report {
    pub summaries: Vec<SummaryEntry>,
    pub failures: Vec<RunFailure>,
    pub files: Vec<PathBuf>,
}

impl Report {
    /// 0 when every run succeeded, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        u8::from(!self.failures.is_empty())
    }
}

/// Runs every `(eps, agent, seed)` combination. Runs execute in parallel;
/// results are written from this thread in sweep order (eps as configured,
/// agents as configured, seeds ascending), so output bytes do not depend on
/// `jobs`. Progress goes to `log`.
pub fn execute(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<Report, RunError> {
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let mut report = Report::default();

    let config_path = dir.join(output::CONFIG_FILE);
    std::fs::write(&config_path, render(cfg)).map_err(at(&config_path))?;
    report.files.push(config_path);

    let runs_dir = dir.join(output::RUNS_DIR);
    if cfg.per_run_csv {
        ensure_dir(&runs_dir)?;
    }
    let trace_path = dir.join(output::TRACE_FILE);
    let mut trace = if cfg.csv {
        let mut w = create(&trace_path)?;
        writeln!(w, "{CSV_HEADER}").map_err(at(&trace_path))?;
        Some(w)
    } else {
        None
    };

    for &eps in &cfg.eps {
        let started = Instant::now();
        let run_cfg = cfg.run_for(eps);
        let suite = run_suite(&run_cfg, &cfg.agents, &cfg.seeds, cfg.jobs)
            .map_err(|source| RunError::Suite { eps, source })?;

        for (&(agent, seed), outcome) in &suite.runs {
            if let Err(e) = outcome {
                let _ = writeln!(log, "run failed: eps={eps} agent={agent} seed={seed}: {e}");
                report.failures.push(RunFailure {
                    eps,
                    agent,
                    seed,
                    error: e.to_string(),
                });
            }
        }

        for &agent in &cfg.agents {
            let episodes: Vec<&Episode> = cfg
                .seeds
                .iter()
                .filter_map(|&s| suite.runs.get(&(agent, s)).and_then(|r| r.as_ref().ok()))
                .collect();
            if let Some(w) = trace.as_mut() {
                for ep in &episodes {
                    write_episode(w, eps, ep).map_err(at(&trace_path))?;
                }
            }
            if cfg.per_run_csv {
                for ep in &episodes {
                    report.files.push(write_run_file(&runs_dir, eps, ep)?);
                }
            }
            if episodes.is_empty() {
                continue;
            }
            let opts = SummaryOptions {
                norm_bound: cfg.norm_bound,
            };
            match summarize(&episodes, opts) {
                Ok(list) => report.summaries.extend(
                    list.into_iter()
                        .map(|summary| SummaryEntry { eps, summary }),
                ),
                Err(e) => {
                    let _ = writeln!(log, "summary failed: eps={eps} agent={agent}: {e}");
                }
            }
        }

        let _ = writeln!(
            log,
            "eps={eps}: {} runs in {:.1}s",
            suite.runs.len(),
            started.elapsed().as_secs_f64()
        );
    }

    if let Some(mut w) = trace {
        w.flush().map_err(at(&trace_path))?;
        report.files.push(trace_path);
    }
    if cfg.json {
        let path = dir.join(output::SUMMARY_FILE);
        output::write_summary(
            &path,
            &SummaryFile {
                config: cfg,
                results: &report.summaries,
                failures: &report.failures,
            },
        )?;
        report.files.push(path);
    }
    Ok(report)
}
