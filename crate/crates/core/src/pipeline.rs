//! One experiment run: environment round, context estimation, arm
//! selection, reward, bandit update, and the per-step record.
//!
//! Agents differ only in the context they act on:
//!
//! * `EMKF_TS` / `EMKF_UCB`: Kalman estimate `x̂_t` with windowed
//!   re-estimation of `(D̂, Q̂)`, fed to Thompson sampling or LinUCB.
//! * `ORACLE_TS`: the true latent context (simulation only).
//! * `TS_PCO`: the raw observation `y_t` used as the context.
//!
//! Every agent run with the same seed sees the same instance and the same
//! noise sequence, so traces are paired across agents.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{ts_select, ucb_select, ArmStats, TsConfig, UcbConfig};
use crate::env::{generate_ground_truth, stream_rng, EnvParams, EnvState, GroundTruth};
use crate::error::{Error, Result};
use crate::kalman::FilterState;
use crate::linalg::{identity, Matrix, Vector};
use crate::regret::{decomposition, inst_regret, oracle_arm, StepRecord};
use crate::sysid::{ModelEstimate, Ridge, SysIdAccumulators, SysIdConfig};

/// RNG stream for the agents' own randomness (posterior sampling).
const AGENT_STREAM: u64 = 2;
/// RNG stream for a random initial transition estimate.
const INIT_MODEL_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "EMKF_TS")]
    EmkfTs,
    #[serde(rename = "EMKF_UCB")]
    EmkfUcb,
    #[serde(rename = "ORACLE_TS")]
    OracleTs,
    #[serde(rename = "TS_PCO")]
    TsPco,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::EmkfTs,
        AgentKind::EmkfUcb,
        AgentKind::OracleTs,
        AgentKind::TsPco,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::EmkfTs => "EMKF_TS",
            AgentKind::EmkfUcb => "EMKF_UCB",
            AgentKind::OracleTs => "ORACLE_TS",
            AgentKind::TsPco => "TS_PCO",
        }
    }

    pub fn uses_filter(self) -> bool {
        matches!(self, AgentKind::EmkfTs | AgentKind::EmkfUcb)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter {
                name: "agent",
                reason: format!("unknown agent {s:?}"),
            })
    }
}

/// Starting model `(D̂₀, Q̂₀)` for the EMKF agents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialModel {
    /// `D̂₀ = I`, `Q̂₀ = I`.
    #[default]
    Identity,
    /// `D̂₀ = 11ᵀ/d` (the mean of a normalized-uniform row-stochastic
    /// matrix), `Q̂₀ = I`.
    UniformStochastic,
    /// `D̂₀` drawn as a normalized-uniform row-stochastic matrix from the
    /// run seed, `Q̂₀ = I`.
    RandomStochastic,
}

impl InitialModel {
    pub fn name(self) -> &'static str {
        match self {
            InitialModel::Identity => "identity",
            InitialModel::UniformStochastic => "uniform",
            InitialModel::RandomStochastic => "random",
        }
    }

    /// Starting `D̂₀`; `seed` is only used by the random variant.
    pub fn transition(self, d: usize, seed: u64) -> Matrix {
        match self {
            InitialModel::Identity => identity(d),
            InitialModel::UniformStochastic => Matrix::from_element(d, d, 1.0 / d as f64),
            InitialModel::RandomStochastic => {
                let mut rng = stream_rng(seed, INIT_MODEL_STREAM);
                let mut m = Matrix::from_fn(d, d, |_, _| rng.random::<f64>());
                for mut row in m.row_iter_mut() {
                    let sum: f64 = row.sum();
                    row /= sum;
                }
                m
            }
        }
    }
}

impl FromStr for InitialModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            InitialModel::Identity,
            InitialModel::UniformStochastic,
            InitialModel::RandomStochastic,
        ]
        .into_iter()
        .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| Error::InvalidParameter {
            name: "init_model",
            reason: format!("unknown initial model {s:?} (identity, uniform, random)"),
        })
    }
}

/// Everything one run needs besides the agent and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Horizon `T`.
    pub horizon: u64,
    /// M-step window `L`.
    pub window: u64,
    pub env: EnvParams,
    pub ts: TsConfig,
    pub ucb: UcbConfig,
    /// Zero-pad `y_t` to `d` dimensions for `TS_PCO` instead of running the
    /// bandit in dimension `k`.
    pub pco_padding: bool,
    pub initial_model: InitialModel,
    pub ridge: Ridge,
    pub q_min: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvParams::default();
        let horizon = 5000;
        Self {
            horizon,
            window: 50,
            env,
            ts: TsConfig {
                sigma: env.sigma,
                ..TsConfig::default()
            },
            ucb: UcbConfig::for_horizon(horizon, env.arms),
            pco_padding: false,
            initial_model: InitialModel::Identity,
            ridge: Ridge::TraceScaled(1e-6),
            q_min: 1e-6,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: "horizon must be >= 1".into(),
            });
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter {
                name: "L",
                reason: "window must be >= 1".into(),
            });
        }
        self.env.validate()?;
        self.ts.validate()?;
        self.ucb.validate()
    }

    pub fn sysid(&self) -> SysIdConfig {
        SysIdConfig {
            window: self.window,
            ridge: self.ridge,
            q_min: self.q_min,
            min_pairs: self.env.d,
        }
    }
}

/// Counts how often an agent touched each input stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounts {
    pub observation_reads: u64,
    pub true_context_reads: u64,
}

/// What the environment exposes to an agent in one round. Reads are counted.
pub struct RoundInputs<'a> {
    observation: &'a Vector,
    true_context: &'a Vector,
    observation_reads: Cell<u64>,
    true_context_reads: Cell<u64>,
}

impl<'a> RoundInputs<'a> {
    pub fn new(observation: &'a Vector, true_context: &'a Vector) -> Self {
        Self {
            observation,
            true_context,
            observation_reads: Cell::new(0),
            true_context_reads: Cell::new(0),
        }
    }

    pub fn observation(&self) -> &'a Vector {
        self.observation_reads.set(self.observation_reads.get() + 1);
        self.observation
    }

    /// Only legal for the simulation oracle.
    pub fn true_context(&self) -> &'a Vector {
        self.true_context_reads
            .set(self.true_context_reads.get() + 1);
        self.true_context
    }

    pub fn counts(&self) -> AccessCounts {
        AccessCounts {
            observation_reads: self.observation_reads.get(),
            true_context_reads: self.true_context_reads.get(),
        }
    }
}

/// Kalman filter plus windowed M-step: the context estimator of the EMKF agents.
#[derive(Debug, Clone)]
pub struct EmkfEstimator {
    filter: FilterState,
    sysid: SysIdAccumulators,
    mstep_times: Vec<u64>,
}

impl EmkfEstimator {
    /// Filter with `x_{0|0} = 0`, `P_{0|0} = I` and the given starting model.
    pub fn new(
        observation: Matrix,
        observation_noise: Matrix,
        transition: Matrix,
        process_noise: Matrix,
        sysid: SysIdConfig,
    ) -> Result<Self> {
        let d = observation.ncols();
        Ok(Self {
            filter: FilterState::new(observation, observation_noise, transition, process_noise)?,
            sysid: SysIdAccumulators::new(d, sysid)?,
            mstep_times: Vec::new(),
        })
    }

    /// Estimator for `gt`'s known observation model, starting from `init`.
    pub fn for_system(
        gt: &GroundTruth,
        init: InitialModel,
        sysid: SysIdConfig,
        seed: u64,
    ) -> Result<Self> {
        let d = gt.latent_dim();
        Self::new(
            gt.observation().clone(),
            gt.observation_noise().clone(),
            init.transition(d, seed),
            identity(d),
            sysid,
        )
    }

    pub fn filter(&self) -> &FilterState {
        &self.filter
    }

    pub fn accumulators(&self) -> &SysIdAccumulators {
        &self.sysid
    }

    pub fn mstep_times(&self) -> &[u64] {
        &self.mstep_times
    }

    /// Filters `y_t` with the current model, then runs the M-step if `t` is
    /// a window boundary. A new model only affects later rounds.
    pub fn observe(&mut self, t: u64, y: &Vector) -> Result<(Vector, Option<ModelEstimate>)> {
        let x_hat = self.filter.filter_round(y)?.clone();
        self.sysid.push(&x_hat)?;
        let estimate = self.sysid.maybe_mstep(t)?;
        if let Some(est) = &estimate {
            self.filter
                .set_model(est.transition.clone(), est.process_noise.clone())?;
            self.mstep_times.push(t);
        }
        Ok((x_hat, estimate))
    }
}

#[derive(Debug, Clone)]
enum ContextModel {
    Emkf(Box<EmkfEstimator>),
    Oracle,
    PartialObservation { pad_to: Option<usize> },
}

#[derive(Debug, Clone, Copy)]
enum Selector {
    Thompson(TsConfig),
    Ucb(UcbConfig),
}

/// A bandit agent: a context model feeding a selector over per-arm stats.
#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    context: ContextModel,
    selector: Selector,
    arms: Vec<ArmStats>,
}

impl Agent {
    pub fn new(kind: AgentKind, cfg: &RunConfig, gt: &GroundTruth, seed: u64) -> Result<Self> {
        let d = gt.latent_dim();
        let k = gt.obs_dim();
        let (context, dim) = match kind {
            AgentKind::EmkfTs | AgentKind::EmkfUcb => (
                ContextModel::Emkf(Box::new(EmkfEstimator::for_system(
                    gt,
                    cfg.initial_model,
                    cfg.sysid(),
                    seed,
                )?)),
                d,
            ),
            AgentKind::OracleTs => (ContextModel::Oracle, d),
            AgentKind::TsPco if cfg.pco_padding => {
                (ContextModel::PartialObservation { pad_to: Some(d) }, d)
            }
            AgentKind::TsPco => (ContextModel::PartialObservation { pad_to: None }, k),
        };
        let selector = match kind {
            AgentKind::EmkfUcb => Selector::Ucb(cfg.ucb),
            _ => Selector::Thompson(cfg.ts),
        };
        Ok(Self {
            kind,
            context,
            selector,
            arms: vec![ArmStats::new(dim); gt.num_arms()],
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }

    pub fn estimator(&self) -> Option<&EmkfEstimator> {
        match &self.context {
            ContextModel::Emkf(e) => Some(e),
            _ => None,
        }
    }

    /// Builds the context this agent acts on in round `t`.
    pub fn context(&mut self, t: u64, inputs: &RoundInputs<'_>) -> Result<Vector> {
        match &mut self.context {
            ContextModel::Emkf(est) => Ok(est.observe(t, inputs.observation())?.0),
            ContextModel::Oracle => Ok(inputs.true_context().clone()),
            ContextModel::PartialObservation { pad_to } => {
                let y = inputs.observation();
                Ok(match pad_to {
                    Some(d) => pad(y, *d),
                    None => y.clone(),
                })
            }
        }
    }

    pub fn select(&self, t: u64, context: &Vector, rng: &mut ChaCha8Rng) -> Result<usize> {
        match &self.selector {
            Selector::Thompson(cfg) => ts_select(&self.arms, context, t, cfg, rng),
            Selector::Ucb(cfg) => ucb_select(&self.arms, context, cfg),
        }
    }

    pub fn learn(&mut self, arm: usize, context: &Vector, reward: f64) -> Result<()> {
        let arms = self.arms.len();
        self.arms
            .get_mut(arm)
            .ok_or(Error::ArmOutOfRange { arm, arms })?
            .update(context, reward)
    }
}

fn pad(y: &Vector, d: usize) -> Vector {
    let mut out = Vector::zeros(d);
    out.rows_mut(0, y.len()).copy_from(y);
    out
}

/// Trace of one (agent, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub agent: AgentKind,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub access: AccessCounts,
    /// Rounds where the regret decomposition check failed.
    pub decomposition_violations: u64,
    /// Rounds at which an M-step installed a new model.
    pub mstep_times: Vec<u64>,
}

/// Runs one agent on the instance generated from `seed`.
pub fn run_episode(cfg: &RunConfig, agent: AgentKind, seed: u64) -> Result<Episode> {
    cfg.validate()?;
    let gt = generate_ground_truth(&cfg.env, seed)?;
    let env = EnvState::new(&gt, seed);
    run_episode_on(cfg, agent, &gt, env, seed)
}

/// Runs one agent on a given instance and starting state. `seed` drives the
/// agent's own sampling.
pub fn run_episode_on(
    cfg: &RunConfig,
    kind: AgentKind,
    gt: &GroundTruth,
    mut env: EnvState,
    seed: u64,
) -> Result<Episode> {
    cfg.validate()?;
    let mut agent = Agent::new(kind, cfg, gt, seed)?;
    let mut rng = stream_rng(seed, AGENT_STREAM);
    let d = gt.latent_dim();
    let mut records = Vec::with_capacity(cfg.horizon as usize);
    let mut access = AccessCounts::default();
    let mut violations = 0;
    let mut cum_regret = 0.0;

    for t in 1..=cfg.horizon {
        let obs = env.step(gt)?;
        let x = env.context();
        let inputs = RoundInputs::new(&obs.y, x);
        let context = agent.context(t, &inputs)?;
        let reads = inputs.counts();
        access.observation_reads += reads.observation_reads;
        access.true_context_reads += reads.true_context_reads;

        let arm = agent.select(t, &context, &mut rng)?;
        let a3_monitor = t as f64 * agent.arms()[arm].inverse_norm();
        let reward = env.reward(gt, arm)?;

        let best = oracle_arm(x, gt.arms())?;
        let regret = inst_regret(x, gt.arms(), arm)?;
        cum_regret += regret;
        let latent_estimate = if context.len() == d {
            context.clone()
        } else {
            pad(&context, d)
        };
        if !decomposition(x, &latent_estimate, gt.arms(), arm)?.holds() {
            violations += 1;
        }

        records.push(StepRecord {
            t,
            agent: kind,
            arm,
            reward,
            oracle_arm: best,
            inst_regret: regret,
            cum_regret,
            est_err: kind.uses_filter().then(|| (x - &context).norm()),
            a3_monitor,
            x_norm: x.norm(),
            xhat_norm: context.norm(),
        });
        agent.learn(arm, &context, reward)?;
    }

    Ok(Episode {
        agent: kind,
        seed,
        records,
        access,
        decomposition_violations: violations,
        mstep_times: agent
            .estimator()
            .map(|e| e.mstep_times().to_vec())
            .unwrap_or_default(),
    })
}

/// Results of an agents × seeds sweep, keyed by `(agent, seed)`.
#[derive(Debug, Clone)]
pub struct Suite {
    pub runs: BTreeMap<(AgentKind, u64), Result<Episode>>,
}

impl Suite {
    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.runs.values().filter_map(|r| r.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&(AgentKind, u64), &Error)> {
        self.runs
            .iter()
            .filter_map(|(k, r)| r.as_ref().err().map(|e| (k, e)))
    }

    /// Seed-mean cumulative regret curve of one agent.
    pub fn mean_cum_regret(&self, agent: AgentKind) -> Option<Vec<f64>> {
        let eps: Vec<&Episode> = self.episodes().filter(|e| e.agent == agent).collect();
        let first = eps.first()?;
        let n = eps.len() as f64;
        let mut curve = vec![0.0; first.records.len()];
        for ep in &eps {
            for (c, r) in curve.iter_mut().zip(&ep.records) {
                *c += r.cum_regret / n;
            }
        }
        Some(curve)
    }
}

/// Runs every `(agent, seed)` pair on up to `jobs` worker threads. Failed
/// runs are kept under their key; the rest of the suite still runs.
pub fn run_suite(
    cfg: &RunConfig,
    agents: &[AgentKind],
    seeds: &[u64],
    jobs: usize,
) -> Result<Suite> {
    if agents.is_empty() {
        return Err(Error::EmptyInput("agent list"));
    }
    if seeds.is_empty() {
        return Err(Error::EmptyInput("seed list"));
    }
    cfg.validate()?;
    let keys: Vec<(AgentKind, u64)> = agents
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter {
            name: "jobs",
            reason: e.to_string(),
        })?;
    let runs = pool.install(|| {
        keys.par_iter()
            .map(|&(agent, seed)| ((agent, seed), run_episode(cfg, agent, seed)))
            .collect::<Vec<_>>()
    });
    Ok(Suite {
        runs: runs.into_iter().collect(),
    })
}
