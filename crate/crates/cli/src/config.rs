//! Experiment configuration: built-in defaults, then an optional flat
//! `key = value` file, then command-line flags.
//!
//! ```text
//! # comment
//! T = 2000
//! eps = 0.1, 0.5
//! seeds = 0..10        # 0 through 9; `a..=b` is inclusive
//! agents = EMKF_TS, TS_PCO
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use emkf_core::{AgentKind, InitialModel, Ridge, RunConfig, UcbConfig};
use serde::Serialize;
use thiserror::Error;

/// Environment variable consulted for the output directory when neither the
/// file nor the flags set `out`.
pub const OUT_ENV: &str = "EMKF_OUT";
pub const DEFAULT_OUT: &str = "results";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read config file {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: expected `key = value`", path.display())]
    Syntax { path: PathBuf, line: usize },
}

impl ConfigError {
    /// The offending key, when the error concerns one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key } => Some(key),
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }

    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Every recognised key, in documentation order.
pub const KEYS: &[&str] = &[
    "d",
    "k",
    "K",
    "sigma",
    "s_obs",
    "eps",
    "T",
    "L",
    "delta",
    "exploration_scale",
    "alpha",
    "ridge",
    "q_min",
    "init_model",
    "pco_padding",
    "agents",
    "seeds",
    "out",
    "jobs",
    "csv",
    "json",
    "per_run_csv",
    "norm_bound",
];

/// Command-line interface. Every option mirrors a config-file key.
#[derive(Debug, Default, Parser)]
#[command(
    name = "emkf",
    version,
    about = "Run latent-context bandit experiments and write regret traces",
    allow_negative_numbers = true,
    args_override_self = true
)]
pub struct Cli {
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Latent context dimension.
    #[arg(long)]
    pub d: Option<String>,
    /// Observation dimension.
    #[arg(long)]
    pub k: Option<String>,
    /// Number of arms.
    #[arg(long = "K")]
    pub arms: Option<String>,
    /// Reward noise standard deviation.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Observation noise variance (Σ = s_obs·I).
    #[arg(long = "s_obs", alias = "s-obs")]
    pub s_obs: Option<String>,
    /// Process noise levels to sweep (Q = eps·I), comma separated.
    #[arg(long)]
    pub eps: Option<String>,
    /// Horizon.
    #[arg(long = "T")]
    pub horizon: Option<String>,
    /// M-step window length.
    #[arg(long = "L")]
    pub window: Option<String>,
    /// Thompson sampling confidence parameter.
    #[arg(long)]
    pub delta: Option<String>,
    /// Multiplier on the Thompson sampling width.
    #[arg(long = "exploration_scale", alias = "exploration-scale")]
    pub exploration_scale: Option<String>,
    /// LinUCB width; defaults to 1 + sqrt(ln(2TK)/2).
    #[arg(long)]
    pub alpha: Option<String>,
    /// M-step ridge coefficient c in λ = c·trace(X)/d.
    #[arg(long)]
    pub ridge: Option<String>,
    /// Eigenvalue floor of the estimated process noise.
    #[arg(long = "q_min", alias = "q-min")]
    pub q_min: Option<String>,
    /// Starting transition estimate: identity, uniform or random.
    #[arg(long = "init_model", alias = "init-model")]
    pub init_model: Option<String>,
    /// Zero-pad observations to d dimensions for TS_PCO.
    #[arg(long = "pco_padding", alias = "pco-padding")]
    pub pco_padding: Option<String>,
    /// Agents to run, comma separated.
    #[arg(long)]
    pub agents: Option<String>,
    /// Seeds: comma-separated values and ranges (`0..20`, `3..=5`).
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory (falls back to $EMKF_OUT, then `results`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<String>,
    /// Write the long-format trace CSV.
    #[arg(long)]
    pub csv: Option<String>,
    /// Write summary.json.
    #[arg(long)]
    pub json: Option<String>,
    /// Also write one CSV per (eps, agent, seed).
    #[arg(long = "per_run_csv", alias = "per-run-csv")]
    pub per_run_csv: Option<String>,
    /// Warn when context norms exceed this bound.
    #[arg(long = "norm_bound", alias = "norm-bound")]
    pub norm_bound: Option<String>,
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let fields: [(&'static str, &Option<String>); 22] = [
            ("d", &self.d),
            ("k", &self.k),
            ("K", &self.arms),
            ("sigma", &self.sigma),
            ("s_obs", &self.s_obs),
            ("eps", &self.eps),
            ("T", &self.horizon),
            ("L", &self.window),
            ("delta", &self.delta),
            ("exploration_scale", &self.exploration_scale),
            ("alpha", &self.alpha),
            ("ridge", &self.ridge),
            ("q_min", &self.q_min),
            ("init_model", &self.init_model),
            ("pco_padding", &self.pco_padding),
            ("agents", &self.agents),
            ("seeds", &self.seeds),
            ("jobs", &self.jobs),
            ("csv", &self.csv),
            ("json", &self.json),
            ("per_run_csv", &self.per_run_csv),
            ("norm_bound", &self.norm_bound),
        ];
        let mut out: Vec<_> = fields
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if let Some(dir) = &self.out {
            out.push(("out", dir.to_string_lossy().into_owned()));
        }
        out
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Per-run settings; `run.env.eps` is replaced by each sweep value.
    pub run: RunConfig,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub agents: Vec<AgentKind>,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub csv: bool,
    pub json: bool,
    pub per_run_csv: bool,
    pub norm_bound: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Draft::default()
            .finish(None)
            .expect("built-in defaults are valid")
    }
}

impl ExperimentConfig {
    /// Defaults, then `cli.config` if given, then the flags.
    pub fn from_cli(cli: &Cli) -> Result<Self, ConfigError> {
        let mut draft = Draft::default();
        if let Some(path) = &cli.config {
            for (key, value) in read_file(path)? {
                draft.set(&key, &value)?;
            }
        }
        for (key, value) in cli.overrides() {
            draft.set(key, &value)?;
        }
        draft.finish(std::env::var_os(OUT_ENV).map(PathBuf::from))
    }

    /// Applies `key = value` pairs on top of the defaults; `EMKF_OUT` is not
    /// consulted.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut draft = Draft::default();
        for (key, value) in pairs {
            draft.set(key, value)?;
        }
        draft.finish(None)
    }

    /// Run settings for one sweep value.
    pub fn run_for(&self, eps: f64) -> RunConfig {
        let mut cfg = self.run.clone();
        cfg.env.eps = eps;
        cfg
    }
}

/// Parses a config file into ordered `(key, value)` pairs.
pub fn read_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pairs(&text).map_err(|line| ConfigError::Syntax {
        path: path.to_path_buf(),
        line,
    })
}

/// Splits config text into pairs; `Err` carries the 1-based bad line.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, usize> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(i + 1)?;
        let key = key.trim();
        if key.is_empty() {
            return Err(i + 1);
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Settings collected before cross-field validation.
#[derive(Debug, Clone)]
struct Draft {
    run: RunConfig,
    alpha: Option<f64>,
    eps: Vec<f64>,
    seeds: Vec<u64>,
    agents: Vec<AgentKind>,
    out: Option<PathBuf>,
    jobs: usize,
    csv: bool,
    json: bool,
    per_run_csv: bool,
    norm_bound: Option<f64>,
}

impl Default for Draft {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            alpha: None,
            eps: vec![0.1, 0.5, 1.0],
            seeds: (0..20).collect(),
            agents: AgentKind::ALL.to_vec(),
            out: None,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            csv: true,
            json: true,
            per_run_csv: false,
            norm_bound: None,
        }
    }
}

impl Draft {
    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let run = &mut self.run;
        match key {
            "d" => run.env.d = count(key, value, 1)?,
            "k" => run.env.k = count(key, value, 1)?,
            "K" => run.env.arms = count(key, value, 1)?,
            "sigma" => {
                let s = real(key, value, |v| v >= 0.0, "must be >= 0")?;
                run.env.sigma = s;
                run.ts.sigma = s;
            }
            "s_obs" => run.env.s_obs = real(key, value, |v| v >= 0.0, "must be >= 0")?,
            "eps" => {
                self.eps = list(value)
                    .map(|v| real(key, v, |x| x > 0.0, "noise levels must be > 0"))
                    .collect::<Result<_, _>>()?;
                if self.eps.is_empty() {
                    return Err(ConfigError::invalid(key, "at least one value required"));
                }
            }
            "T" => run.horizon = count(key, value, 1)? as u64,
            "L" => run.window = count(key, value, 1)? as u64,
            "delta" => {
                run.ts.delta = real(key, value, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)")?
            }
            "exploration_scale" => {
                run.ts.exploration_scale = real(key, value, |v| v >= 0.0, "must be >= 0")?
            }
            "alpha" => self.alpha = Some(real(key, value, |v| v > 0.0, "must be > 0")?),
            "ridge" => {
                run.ridge = Ridge::TraceScaled(real(key, value, |v| v >= 0.0, "must be >= 0")?)
            }
            "q_min" => run.q_min = real(key, value, |v| v >= 0.0, "must be >= 0")?,
            "init_model" => {
                run.initial_model = value
                    .parse::<InitialModel>()
                    .map_err(|e| ConfigError::invalid(key, e.to_string()))?
            }
            "pco_padding" => run.pco_padding = flag(key, value)?,
            "agents" => {
                let mut agents = Vec::new();
                for name in list(value) {
                    let agent = name.parse::<AgentKind>().map_err(|_| {
                        ConfigError::invalid(key, format!("unknown agent `{name}`"))
                    })?;
                    if !agents.contains(&agent) {
                        agents.push(agent);
                    }
                }
                if agents.is_empty() {
                    return Err(ConfigError::invalid(key, "at least one agent required"));
                }
                self.agents = agents;
            }
            "seeds" => self.seeds = seed_list(value)?,
            "out" => {
                if value.is_empty() {
                    return Err(ConfigError::invalid(key, "empty path"));
                }
                self.out = Some(PathBuf::from(value));
            }
            "jobs" => self.jobs = count(key, value, 1)?,
            "csv" => self.csv = flag(key, value)?,
            "json" => self.json = flag(key, value)?,
            "per_run_csv" => self.per_run_csv = flag(key, value)?,
            "norm_bound" => self.norm_bound = Some(real(key, value, |v| v > 0.0, "must be > 0")?),
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn finish(self, env_out: Option<PathBuf>) -> Result<ExperimentConfig, ConfigError> {
        let mut run = self.run;
        run.ucb = match self.alpha {
            Some(alpha) => UcbConfig { alpha },
            None => UcbConfig::for_horizon(run.horizon, run.env.arms),
        };
        if run.env.k > run.env.d {
            return Err(ConfigError::invalid(
                "k",
                format!(
                    "observation dimension {} exceeds d = {}",
                    run.env.k, run.env.d
                ),
            ));
        }
        for &eps in &self.eps {
            let mut cfg = run.clone();
            cfg.env.eps = eps;
            cfg.validate().map_err(|e| match e {
                emkf_core::Error::InvalidParameter { name, reason } => {
                    ConfigError::invalid(name, reason)
                }
                other => ConfigError::invalid("config", other.to_string()),
            })?;
        }
        Ok(ExperimentConfig {
            run,
            eps: self.eps,
            seeds: self.seeds,
            agents: self.agents,
            out_dir: self
                .out
                .or(env_out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            jobs: self.jobs,
            csv: self.csv,
            json: self.json,
            per_run_csv: self.per_run_csv,
            norm_bound: self.norm_bound,
        })
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn count(field: &str, value: &str, min: usize) -> Result<usize, ConfigError> {
    let v: usize = value.trim().parse().map_err(|_| {
        ConfigError::invalid(field, format!("`{value}` is not a non-negative integer"))
    })?;
    if v < min {
        return Err(ConfigError::invalid(field, format!("must be >= {min}")));
    }
    Ok(v)
}

fn real(
    field: &str,
    value: &str,
    ok: impl Fn(f64) -> bool,
    rule: &str,
) -> Result<f64, ConfigError> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| ConfigError::invalid(field, format!("`{value}` is not a number")))?;
    if !v.is_finite() || !ok(v) {
        return Err(ConfigError::invalid(
            field,
            format!("{v} out of range: {rule}"),
        ));
    }
    Ok(v)
}

fn flag(field: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::invalid(
            field,
            format!("`{value}` is not a boolean"),
        )),
    }
}

/// `0..20` is half-open, `0..=19` inclusive; items are comma separated.
/// Duplicates are dropped and the result is sorted.
fn seed_list(value: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = |item: &str| ConfigError::invalid("seeds", format!("cannot parse `{item}`"));
    let num = |s: &str, item: &str| s.trim().parse::<u64>().map_err(|_| bad(item));
    let mut seeds = std::collections::BTreeSet::new();
    for item in list(value) {
        if let Some((lo, hi)) = item.split_once("..=") {
            seeds.extend(num(lo, item)?..=num(hi, item)?);
        } else if let Some((lo, hi)) = item.split_once("..") {
            seeds.extend(num(lo, item)?..num(hi, item)?);
        } else {
            seeds.insert(num(item, item)?);
        }
    }
    if seeds.is_empty() {
        return Err(ConfigError::invalid("seeds", "at least one seed required"));
    }
    Ok(seeds.into_iter().collect())
}

/// The merged configuration as `key = value` lines, reloadable with
/// `--config`.
pub fn render(cfg: &ExperimentConfig) -> String {
    let run = &cfg.run;
    let ridge = match run.ridge {
        Ridge::TraceScaled(c) | Ridge::Absolute(c) => c,
    };
    let join = |items: Vec<String>| items.join(", ");
    let values: BTreeMap<&str, String> = BTreeMap::from([
        ("d", run.env.d.to_string()),
        ("k", run.env.k.to_string()),
        ("K", run.env.arms.to_string()),
        ("sigma", run.env.sigma.to_string()),
        ("s_obs", run.env.s_obs.to_string()),
        ("eps", join(cfg.eps.iter().map(f64::to_string).collect())),
        ("T", run.horizon.to_string()),
        ("L", run.window.to_string()),
        ("delta", run.ts.delta.to_string()),
        ("exploration_scale", run.ts.exploration_scale.to_string()),
        ("alpha", run.ucb.alpha.to_string()),
        ("ridge", ridge.to_string()),
        ("q_min", run.q_min.to_string()),
        ("init_model", run.initial_model.name().to_string()),
        ("pco_padding", run.pco_padding.to_string()),
        (
            "agents",
            join(cfg.agents.iter().map(|a| a.to_string()).collect()),
        ),
        (
            "seeds",
            join(cfg.seeds.iter().map(u64::to_string).collect()),
        ),
        ("out", cfg.out_dir.display().to_string()),
        ("jobs", cfg.jobs.to_string()),
        ("csv", cfg.csv.to_string()),
        ("json", cfg.json.to_string()),
        ("per_run_csv", cfg.per_run_csv.to_string()),
    ]);
    let mut text = String::new();
    for key in KEYS {
        if let Some(v) = values.get(key) {
            text.push_str(&format!("{key} = {v}\n"));
        }
    }
    if let Some(b) = cfg.norm_bound {
        text.push_str(&format!("norm_bound = {b}\n"));
    }
    text
}
