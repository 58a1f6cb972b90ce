//! Linear contextual bandits over whatever context vector they are given:
//! Thompson sampling with the `v_t` schedule, and LinUCB.
//!
//! Each arm keeps the unit-ridge regression statistics
//!
//! ```text
//!   B_a = I + Σ x xᵀ      f_a = Σ r x      μ̂_a = B_a⁻¹ f_a
//! ```
//!
//! and caches the Cholesky factor `B_a = L Lᵀ`, refreshed on every update.

use nalgebra::Cholesky;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    argmax_lowest, identity, inverse_spectral_norm, standard_normal, Matrix, Vector,
};

/// Per-arm sufficient statistics.
#[derive(Debug, Clone)]
pub struct ArmStats {
    precision: Matrix,
    moment: Vector,
    mean: Vector,
    factor: Matrix,
    pulls: u64,
}

impl ArmStats {
    /// `B = I`, `f = 0`.
    pub fn new(d: usize) -> Self {
        Self {
            precision: identity(d),
            moment: Vector::zeros(d),
            mean: Vector::zeros(d),
            factor: identity(d),
            pulls: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    /// `B̂_a`.
    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    /// `f̂_a`.
    pub fn moment(&self) -> &Vector {
        &self.moment
    }

    /// `μ̂_a = B̂_a⁻¹ f̂_a`.
    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    /// `‖B̂_a⁻¹‖₂`.
    pub fn inverse_norm(&self) -> f64 {
        inverse_spectral_norm(&self.precision)
    }

    /// `L⁻¹ x` where `B = L Lᵀ`; its squared norm is `xᵀ B⁻¹ x`.
    fn whiten(&self, x: &Vector) -> Vector {
        self.factor
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `‖x‖_{B⁻¹}`.
    pub fn confidence_norm(&self, x: &Vector) -> f64 {
        self.whiten(x).norm()
    }

    /// Rank-one update with the pulled context and observed reward.
    pub fn update(&mut self, x_hat: &Vector, reward: f64) -> Result<()> {
        check_dim("context", self.dim(), x_hat.len())?;
        if !reward.is_finite() || x_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "reward update",
                reason: "context and reward must be finite".into(),
            });
        }
        self.precision.ger(1.0, x_hat, x_hat, 1.0);
        self.moment.axpy(reward, x_hat, 1.0);
        let chol = Cholesky::new(self.precision.clone())
            .ok_or(Error::NotPositiveSemidefinite("arm precision matrix"))?;
        self.mean = chol.solve(&self.moment);
        self.factor = chol.l();
        self.pulls += 1;
        Ok(())
    }
}

/// Thompson sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsConfig {
    /// Reward noise scale used in `v_t`.
    pub sigma: f64,
    /// Confidence parameter in `(0, 1)`.
    pub delta: f64,
    /// Multiplier on `v_t`; 0 turns sampling into greedy selection.
    pub exploration_scale: f64,
}

impl Default for TsConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            delta: 0.1,
            exploration_scale: 1.0,
        }
    }
}

impl TsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("must lie in (0, 1), got {}", self.delta),
            });
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "must be finite and >= 0".into(),
            });
        }
        if !(self.exploration_scale >= 0.0 && self.exploration_scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "exploration_scale",
                reason: "must be finite and >= 0".into(),
            });
        }
        Ok(())
    }

    /// `v_t = σ √(9 d ln(t/δ))`, with the log argument clamped to at least
    /// `e`, times `exploration_scale`.
    pub fn width(&self, t: u64, d: usize) -> f64 {
        let arg = (t as f64 / self.delta).max(std::f64::consts::E);
        self.exploration_scale * self.sigma * (9.0 * d as f64 * arg.ln()).sqrt()
    }
}

/// LinUCB parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbConfig {
    /// Confidence width `α`.
    pub alpha: f64,
}

impl UcbConfig {
    /// `α = 1 + √(ln(2TK)/2)`.
    pub fn for_horizon(horizon: u64, arms: usize) -> Self {
        let n = (2 * horizon.max(1) * arms.max(1) as u64) as f64;
        Self {
            alpha: 1.0 + (n.ln() / 2.0).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be > 0, got {}", self.alpha),
            });
        }
        Ok(())
    }
}

fn check_arms(arms: &[ArmStats], x_hat: &Vector) -> Result<()> {
    let first = arms.first().ok_or(Error::EmptyInput("arm list"))?;
    for arm in arms {
        check_dim("arm dimension", first.dim(), arm.dim())?;
    }
    check_dim("context", first.dim(), x_hat.len())
}

/// Samples `μ̃_a ~ N(μ̂_a, v_t² B̂_a⁻¹)` for every arm and returns the arm
/// maximizing `⟨x̂, μ̃_a⟩` (lowest index on ties).
///
/// Only the projection onto `x̂` matters, so each draw is evaluated as
/// `⟨x̂, μ̂_a⟩ + v_t ⟨L⁻¹x̂, z⟩` with `z ~ N(0, I)`, which is exactly
/// `⟨x̂, μ̂_a + v_t L⁻ᵀz⟩`.
pub fn ts_select<R: Rng + ?Sized>(
    arms: &[ArmStats],
    x_hat: &Vector,
    t: u64,
    cfg: &TsConfig,
    rng: &mut R,
) -> Result<usize> {
    check_arms(arms, x_hat)?;
    let width = cfg.width(t, x_hat.len());
    let scores: Vec<f64> = arms
        .iter()
        .map(|arm| {
            let z = standard_normal(rng, arm.dim());
            x_hat.dot(arm.mean()) + width * arm.whiten(x_hat).dot(&z)
        })
        .collect();
    Ok(argmax_lowest(scores).expect("non-empty arm list"))
}

/// Returns `argmax_a ⟨x̂, μ̂_a⟩ + α ‖x̂‖_{B̂_a⁻¹}` (lowest index on ties).
pub fn ucb_select(arms: &[ArmStats], x_hat: &Vector, cfg: &UcbConfig) -> Result<usize> {
    check_arms(arms, x_hat)?;
    let scores = arms
        .iter()
        .map(|arm| x_hat.dot(arm.mean()) + cfg.alpha * arm.confidence_norm(x_hat));
    Ok(argmax_lowest(scores).expect("non-empty arm list"))
}
