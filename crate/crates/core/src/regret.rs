//! Regret accounting, the per-step regret decomposition check, and the
//! assumption monitors aggregated over seeds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{argmax_lowest, Vector};
use crate::pipeline::{AgentKind, Episode};

/// One round of an experiment trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub agent: AgentKind,
    pub arm: usize,
    pub reward: f64,
    pub oracle_arm: usize,
    pub inst_regret: f64,
    pub cum_regret: f64,
    /// `‖x_t − x̂_t‖` for agents that run a filter.
    pub est_err: Option<f64>,
    /// `t · ‖B̂_{a_t}⁻¹(t)‖₂` before the update.
    pub a3_monitor: f64,
    pub x_norm: f64,
    /// Norm of the context the agent acted on.
    pub xhat_norm: f64,
}

/// `argmax_a ⟨x, μ_a⟩`, lowest index on ties.
pub fn oracle_arm(x: &Vector, mu: &[Vector]) -> Result<usize> {
    argmax_lowest(mu.iter().map(|m| x.dot(m))).ok_or(Error::EmptyInput("arm parameters"))
}

/// `Δ_a = max_b ⟨x, μ_b⟩ − ⟨x, μ_a⟩`.
pub fn inst_regret(x: &Vector, mu: &[Vector], arm: usize) -> Result<f64> {
    let best = oracle_arm(x, mu)?;
    let chosen = mu.get(arm).ok_or(Error::ArmOutOfRange {
        arm,
        arms: mu.len(),
    })?;
    Ok((x.dot(&mu[best]) - x.dot(chosen)).max(0.0))
}

/// Both sides of `Δ_a ≤ 2 M₁ ‖x − x̂‖ + Δ̂_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub regret: f64,
    pub bound: f64,
}

impl Decomposition {
    pub fn holds(&self) -> bool {
        self.regret <= self.bound + 1e-9 * (1.0 + self.bound.abs())
    }
}

/// Evaluates the regret decomposition with `M₁ = max_a ‖μ_a‖`, where `Δ̂_a`
/// is the gap measured on the estimated context.
pub fn decomposition(
    x: &Vector,
    x_hat: &Vector,
    mu: &[Vector],
    arm: usize,
) -> Result<Decomposition> {
    let m1 = mu.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let regret = inst_regret(x, mu, arm)?;
    let est_gap = inst_regret(x_hat, mu, arm)?;
    Ok(Decomposition {
        regret,
        bound: 2.0 * m1 * (x - x_hat).norm() + est_gap,
    })
}

pub fn decomposition_check(x: &Vector, x_hat: &Vector, mu: &[Vector], arm: usize) -> Result<bool> {
    decomposition(x, x_hat, mu, arm).map(|d| d.holds())
}

/// Checkpoints for summaries: powers of two below `horizon`, then `horizon`.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(1u64), |&c| c.checked_mul(2))
        .take_while(|&c| c < horizon)
        .collect();
    if horizon > 0 {
        out.push(horizon);
    }
    out
}

/// `(R(T) − R(T/2)) / (R(T/2) − R(0))` for a cumulative curve indexed from
/// `t = 1`. `None` when the denominator vanishes.
pub fn slope_ratio(cum: &[f64]) -> Option<f64> {
    let horizon = cum.len();
    let half = horizon / 2;
    if half == 0 {
        return None;
    }
    let at_half = cum[half - 1];
    let at_end = cum[horizon - 1];
    if at_half == 0.0 {
        return None;
    }
    Some((at_end - at_half) / at_half)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and (population) standard deviation across seeds at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub mean_cum_regret: f64,
    pub std_cum_regret: f64,
    /// Mean over seeds of `Σ_{s≤t} ‖ε_s‖ / t`; absent without a filter.
    pub mean_avg_est_err: Option<f64>,
}

/// Aggregate of one agent's traces over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: AgentKind,
    pub seeds: usize,
    pub horizon: u64,
    pub checkpoints: Vec<Checkpoint>,
    /// Slope ratio of the seed-mean cumulative regret curve.
    pub slope_ratio: Option<f64>,
    pub mean_final_regret: f64,
    /// Mean over seeds of `Σ_t ‖ε_t‖`.
    pub mean_sum_est_err: Option<f64>,
    pub max_x_norm: f64,
    pub max_xhat_norm: f64,
    pub max_a3_monitor: f64,
    /// Largest `t·‖B̂_a⁻¹‖₂` seen per arm (over rounds where it was pulled).
    pub max_a3_per_arm: Vec<Option<f64>>,
    pub max_abs_reward: f64,
    pub decomposition_violations: u64,
    pub warnings: Vec<String>,
}

/// Options for [`summarize`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SummaryOptions {
    /// Warn when `‖x_t‖` or `‖x̂_t‖` exceeds this.
    pub norm_bound: Option<f64>,
}

/// Aggregates episodes per agent. All traces of an agent must share a horizon.
pub fn summarize(episodes: &[&Episode], opts: SummaryOptions) -> Result<Vec<AgentSummary>> {
    if episodes.is_empty() {
        return Err(Error::EmptyInput("trace list"));
    }
    let mut by_agent: BTreeMap<AgentKind, Vec<&Episode>> = BTreeMap::new();
    for ep in episodes {
        by_agent.entry(ep.agent).or_default().push(ep);
    }
    by_agent
        .into_iter()
        .map(|(agent, eps)| summarize_agent(agent, &eps, opts))
        .collect()
}

fn summarize_agent(
    agent: AgentKind,
    eps: &[&Episode],
    opts: SummaryOptions,
) -> Result<AgentSummary> {
    let horizon = eps[0].records.len();
    if horizon == 0 {
        return Err(Error::EmptyInput("trace"));
    }
    for ep in eps {
        crate::error::check_dim("trace length", horizon, ep.records.len())?;
    }
    let n = eps.len() as f64;
    let has_filter = eps[0].records.iter().all(|r| r.est_err.is_some());

    let mut mean_curve = vec![0.0; horizon];
    let mut err_prefix: Vec<Vec<f64>> = Vec::with_capacity(eps.len());
    for ep in eps {
        for (acc, r) in mean_curve.iter_mut().zip(&ep.records) {
            *acc += r.cum_regret / n;
        }
        if has_filter {
            let mut run = 0.0;
            err_prefix.push(
                ep.records
                    .iter()
                    .map(|r| {
                        run += r.est_err.unwrap_or(0.0);
                        run
                    })
                    .collect(),
            );
        }
    }

    let checkpoints = checkpoints(horizon as u64)
        .into_iter()
        .map(|t| {
            let idx = (t - 1) as usize;
            let at: Vec<f64> = eps.iter().map(|ep| ep.records[idx].cum_regret).collect();
            let (mean, std) = mean_std(&at);
            let mean_avg_est_err =
                has_filter.then(|| err_prefix.iter().map(|p| p[idx] / t as f64).sum::<f64>() / n);
            Checkpoint {
                t,
                mean_cum_regret: mean,
                std_cum_regret: std,
                mean_avg_est_err,
            }
        })
        .collect();

    let arms = eps
        .iter()
        .flat_map(|ep| ep.records.iter().map(|r| r.arm + 1))
        .max()
        .unwrap_or(0);
    let mut max_a3_per_arm: Vec<Option<f64>> = vec![None; arms];
    let (mut max_x, mut max_xhat, mut max_a3) = (0.0f64, 0.0f64, 0.0f64);
    let mut max_reward = 0.0f64;
    for r in eps.iter().flat_map(|ep| ep.records.iter()) {
        max_reward = max_reward.max(r.reward.abs());
        max_x = max_x.max(r.x_norm);
        max_xhat = max_xhat.max(r.xhat_norm);
        max_a3 = max_a3.max(r.a3_monitor);
        let slot = &mut max_a3_per_arm[r.arm];
        *slot = Some(slot.map_or(r.a3_monitor, |m| m.max(r.a3_monitor)));
    }

    let mut warnings = Vec::new();
    if let Some(bound) = opts.norm_bound {
        if max_x > bound {
            warnings.push(format!("max ||x_t|| = {max_x:.3} exceeds bound {bound}"));
        }
        if max_xhat > bound {
            warnings.push(format!(
                "max ||x_hat_t|| = {max_xhat:.3} exceeds bound {bound}"
            ));
        }
    }

    Ok(AgentSummary {
        agent,
        seeds: eps.len(),
        horizon: horizon as u64,
        checkpoints,
        slope_ratio: slope_ratio(&mean_curve),
        mean_final_regret: mean_curve[horizon - 1],
        mean_sum_est_err: has_filter
            .then(|| err_prefix.iter().map(|p| p[horizon - 1]).sum::<f64>() / n),
        max_x_norm: max_x,
        max_xhat_norm: max_xhat,
        max_a3_monitor: max_a3,
        max_a3_per_arm,
        max_abs_reward: max_reward,
        decomposition_violations: eps.iter().map(|ep| ep.decomposition_violations).sum(),
        warnings,
    })
}
