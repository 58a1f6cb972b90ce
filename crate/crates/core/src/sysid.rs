//! Recursive least-squares estimation of the transition matrix and its noise
//! covariance from filtered contexts, restarted every `L` rounds.
//!
//! ```text
//!   Ψ += x̂_t x̂_{t-1}ᵀ      X += x̂_{t-1} x̂_{t-1}ᵀ      Y += x̂_t x̂_tᵀ
//!   D̂ = Ψ (X + λI)⁻¹       Q̂ = (Y − D̂ Ψᵀ) / n
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{identity, psd_project, spd_solve, Matrix, Vector};

/// Ridge added to `X` before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ridge {
    /// Fixed `λ`.
    Absolute(f64),
    /// `λ = c · trace(X) / d`, or `c` when `X = 0`.
    TraceScaled(f64),
}

impl Ridge {
    pub fn value(&self, x: &Matrix) -> f64 {
        match *self {
            Ridge::Absolute(l) => l,
            Ridge::TraceScaled(c) => {
                let scale = x.trace() / x.nrows().max(1) as f64;
                if scale > 0.0 {
                    c * scale
                } else {
                    c
                }
            }
        }
    }
}

/// Tuning of the M-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SysIdConfig {
    /// Window length `L`.
    pub window: u64,
    pub ridge: Ridge,
    /// Eigenvalue floor for `Q̂`.
    pub q_min: f64,
    /// Skip M-steps whose window holds fewer pairs than this.
    pub min_pairs: usize,
}

impl SysIdConfig {
    /// Defaults for latent dimension `d`: `λ = 1e-6·trace(X)/d`,
    /// `q_min = 1e-6`, and at least `d` pairs per solve.
    pub fn for_dim(d: usize, window: u64) -> Self {
        Self {
            window,
            ridge: Ridge::TraceScaled(1e-6),
            q_min: 1e-6,
            min_pairs: d,
        }
    }
}

/// Output of an M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEstimate {
    pub transition: Matrix,
    /// Symmetric, spectrum floored at `q_min`.
    pub process_noise: Matrix,
    /// Raw `(Y − D̂Ψᵀ)/n` before symmetrization and projection.
    pub process_noise_raw: Matrix,
    /// Number of M-steps completed before this one.
    pub window_index: u64,
}

/// Running sums for one estimation window.
#[derive(Debug, Clone, PartialEq)]
pub struct SysIdAccumulators {
    cross: Matrix,
    lagged: Matrix,
    current: Matrix,
    pairs: usize,
    prev: Option<Vector>,
    config: SysIdConfig,
    windows_done: u64,
}

impl SysIdAccumulators {
    pub fn new(d: usize, config: SysIdConfig) -> Result<Self> {
        if config.window == 0 {
            return Err(Error::InvalidParameter {
                name: "L",
                reason: "window length must be >= 1".into(),
            });
        }
        if config.q_min.is_nan() || config.q_min < 0.0 {
            return Err(Error::InvalidParameter {
                name: "q_min",
                reason: "must be >= 0".into(),
            });
        }
        let lambda_ok = match config.ridge {
            Ridge::Absolute(l) | Ridge::TraceScaled(l) => l >= 0.0 && l.is_finite(),
        };
        if !lambda_ok {
            return Err(Error::InvalidParameter {
                name: "ridge",
                reason: "must be finite and >= 0".into(),
            });
        }
        Ok(Self {
            cross: Matrix::zeros(d, d),
            lagged: Matrix::zeros(d, d),
            current: Matrix::zeros(d, d),
            pairs: 0,
            prev: None,
            config,
            windows_done: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.cross.nrows()
    }

    pub fn config(&self) -> &SysIdConfig {
        &self.config
    }

    /// `Ψ = Σ x̂_t x̂_{t-1}ᵀ`.
    pub fn cross(&self) -> &Matrix {
        &self.cross
    }

    /// `X = Σ x̂_{t-1} x̂_{t-1}ᵀ`.
    pub fn lagged(&self) -> &Matrix {
        &self.lagged
    }

    /// `Y = Σ x̂_t x̂_tᵀ`.
    pub fn current(&self) -> &Matrix {
        &self.current
    }

    /// Transition pairs accumulated in the current window.
    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn previous(&self) -> Option<&Vector> {
        self.prev.as_ref()
    }

    pub fn windows_done(&self) -> u64 {
        self.windows_done
    }

    /// Adds the pair `(x̂_prev, x̂)`; the very first push only seeds `x̂_prev`.
    pub fn push(&mut self, x_hat: &Vector) -> Result<()> {
        check_dim("estimated context", self.dim(), x_hat.len())?;
        if let Some(prev) = &self.prev {
            self.cross.ger(1.0, x_hat, prev, 1.0);
            self.lagged.ger(1.0, prev, prev, 1.0);
            self.current.ger(1.0, x_hat, x_hat, 1.0);
            self.pairs += 1;
        }
        self.prev = Some(x_hat.clone());
        Ok(())
    }

    /// Least-squares `(D̂, Q̂)` from the current window.
    pub fn solve(&self) -> Result<ModelEstimate> {
        if self.pairs == 0 {
            return Err(Error::InsufficientData { have: 0, need: 1 });
        }
        let d = self.dim();
        let lambda = self.config.ridge.value(&self.lagged);
        let regularized = &self.lagged + identity(d) * lambda;
        // D̂ = Ψ (X+λI)⁻¹  ⇔  (X+λI) D̂ᵀ = Ψᵀ.
        let transition = match spd_solve(&regularized, &self.cross.transpose()) {
            Some(dt) => dt.transpose(),
            None => {
                let inv = regularized.clone().pseudo_inverse(1e-14).map_err(|_| {
                    Error::RankDeficient {
                        what: "lagged context moments",
                        rank: crate::linalg::numerical_rank(&regularized),
                        needed: d,
                    }
                })?;
                &self.cross * inv
            }
        };
        let raw = (&self.current - &transition * self.cross.transpose()) / self.pairs as f64;
        let process_noise = psd_project(&raw, self.config.q_min);
        Ok(ModelEstimate {
            transition,
            process_noise,
            process_noise_raw: raw,
            window_index: self.windows_done,
        })
    }

    /// Runs the M-step at window boundaries `t ∈ {L, 2L, …}` when the window
    /// holds at least `min_pairs` pairs, then zeroes the sums. The last
    /// context is kept so the next pair straddles the boundary.
    pub fn maybe_mstep(&mut self, t: u64) -> Result<Option<ModelEstimate>> {
        if t == 0 || t % self.config.window != 0 || self.pairs < self.config.min_pairs.max(1) {
            return Ok(None);
        }
        let estimate = self.solve()?;
        self.reset();
        self.windows_done += 1;
        Ok(Some(estimate))
    }

    fn reset(&mut self) {
        self.cross.fill(0.0);
        self.lagged.fill(0.0);
        self.current.fill(0.0);
        self.pairs = 0;
    }
}
