//! Partially observed linear-Gaussian contextual environment.
//!
//! The latent context follows `x' = D x + ε` with `ε ~ N(0, Q)`, the learner
//! sees `y = A x' + n` with `n ~ N(0, Σ)`, and pulling arm `a` pays
//! `⟨x', μ_a⟩ + ω` with `ω ~ N(0, σ²)`.
//!
//! Each round the environment transitions first, then emits the observation;
//! the reward for that round is evaluated on the post-transition context.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    complete_basis, covariance_factor, identity, standard_normal, truncated_identity, Matrix,
    Vector,
};

/// RNG stream reserved for drawing ground-truth parameters.
const GROUND_TRUTH_STREAM: u64 = 0;
/// RNG stream reserved for the environment's noise sequence.
const ENV_NOISE_STREAM: u64 = 1;

/// Seeded ChaCha generator on a dedicated stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Hidden parameters of the environment.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    transition: Matrix,
    process_noise: Matrix,
    observation: Matrix,
    observation_noise: Matrix,
    reward_std: f64,
    arms: Vec<Vector>,
    process_factor: Matrix,
    observation_factor: Matrix,
}

impl GroundTruth {
    /// Validates dimensions and noise covariances.
    ///
    /// `Q` and `Σ` must be symmetric PSD (zero is allowed for noiseless
    /// simulation) and `A` must have full row rank with `k ≤ d`.
    pub fn new(
        transition: Matrix,
        process_noise: Matrix,
        observation: Matrix,
        observation_noise: Matrix,
        reward_std: f64,
        arms: Vec<Vector>,
    ) -> Result<Self> {
        let d = transition.nrows();
        if d == 0 {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: "latent dimension must be at least 1".into(),
            });
        }
        check_dim("transition columns", d, transition.ncols())?;
        check_dim("process noise rows", d, process_noise.nrows())?;
        check_dim("process noise columns", d, process_noise.ncols())?;
        check_dim("observation columns", d, observation.ncols())?;
        let k = observation.nrows();
        if k == 0 || k > d {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: format!("observation dimension {k} must be in 1..={d}"),
            });
        }
        check_dim("observation noise rows", k, observation_noise.nrows())?;
        check_dim("observation noise columns", k, observation_noise.ncols())?;
        if !(reward_std >= 0.0 && reward_std.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("reward noise std must be finite and >= 0, got {reward_std}"),
            });
        }
        if arms.is_empty() {
            return Err(Error::InvalidParameter {
                name: "K",
                reason: "need at least one arm".into(),
            });
        }
        for mu in &arms {
            check_dim("arm parameter", d, mu.len())?;
        }
        let rank = crate::linalg::numerical_rank(&observation);
        if rank < k {
            return Err(Error::RankDeficient {
                what: "observation matrix",
                rank,
                needed: k,
            });
        }
        let process_factor = covariance_factor(&process_noise, "process noise covariance")?;
        let observation_factor =
            covariance_factor(&observation_noise, "observation noise covariance")?;
        Ok(Self {
            transition,
            process_noise,
            observation,
            observation_noise,
            reward_std,
            arms,
            process_factor,
            observation_factor,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn process_noise(&self) -> &Matrix {
        &self.process_noise
    }

    pub fn observation(&self) -> &Matrix {
        &self.observation
    }

    pub fn observation_noise(&self) -> &Matrix {
        &self.observation_noise
    }

    pub fn reward_std(&self) -> f64 {
        self.reward_std
    }

    pub fn arms(&self) -> &[Vector] {
        &self.arms
    }

    /// `max_a ‖μ_a‖`.
    pub fn max_arm_norm(&self) -> f64 {
        self.arms.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// True when `A` is exactly the truncated identity.
    pub fn is_canonical(&self) -> bool {
        self.observation == truncated_identity(self.obs_dim(), self.latent_dim())
    }

    /// Expected reward of `arm` under context `x`.
    pub fn mean_reward(&self, x: &Vector, arm: usize) -> Result<f64> {
        let mu = self.arms.get(arm).ok_or(Error::ArmOutOfRange {
            arm,
            arms: self.arms.len(),
        })?;
        Ok(x.dot(mu))
    }
}

/// Parameters of the random instance generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Latent dimension `d`.
    pub d: usize,
    /// Observation dimension `k`.
    pub k: usize,
    /// Number of arms `K`.
    pub arms: usize,
    /// Transition noise level; `Q = eps·I`.
    pub eps: f64,
    /// Reward noise standard deviation.
    pub sigma: f64,
    /// Observation noise level; `Σ = s_obs·I`.
    pub s_obs: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            d: 20,
            k: 10,
            arms: 15,
            eps: 0.5,
            sigma: 1.0,
            s_obs: 0.1,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "must be >= 1"));
        }
        if self.k == 0 || self.k > self.d {
            return Err(invalid("k", &format!("must be in 1..={}", self.d)));
        }
        if self.arms == 0 {
            return Err(invalid("K", "must be >= 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid("eps", "must be > 0"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be >= 0"));
        }
        if !(self.s_obs >= 0.0 && self.s_obs.is_finite()) {
            return Err(invalid("s_obs", "must be >= 0"));
        }
        Ok(())
    }
}

fn invalid(name: &'static str, reason: &str) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.to_string(),
    }
}

/// Draws a random instance: row-stochastic `D` from normalized uniform
/// entries, `Q = eps·I`, `A = I_{k×d}`, `Σ = s_obs·I`, Gaussian arm vectors.
pub fn generate_ground_truth(params: &EnvParams, seed: u64) -> Result<GroundTruth> {
    params.validate()?;
    let EnvParams { d, k, arms, .. } = *params;
    let mut rng = stream_rng(seed, GROUND_TRUTH_STREAM);

    let mut transition = Matrix::from_fn(d, d, |_, _| rng.random::<f64>());
    for mut row in transition.row_iter_mut() {
        let sum: f64 = row.sum();
        row /= sum;
    }
    let mu = (0..arms).map(|_| standard_normal(&mut rng, d)).collect();

    GroundTruth::new(
        transition,
        identity(d) * params.eps,
        truncated_identity(k, d),
        identity(k) * params.s_obs,
        params.sigma,
        mu,
    )
}

/// Output of one environment round.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: Vector,
}

/// Mutable simulation state. Only [`EnvState::step`] moves the context.
#[derive(Debug, Clone)]
pub struct EnvState {
    t: u64,
    x: Vector,
    reward_noise: f64,
    rng: ChaCha8Rng,
}

impl EnvState {
    /// Fresh state with `x₀` drawn entrywise from a standard Gaussian.
    pub fn new(gt: &GroundTruth, seed: u64) -> Self {
        let mut rng = stream_rng(seed, ENV_NOISE_STREAM);
        let x = standard_normal(&mut rng, gt.latent_dim());
        Self {
            t: 0,
            x,
            reward_noise: 0.0,
            rng,
        }
    }

    /// State starting from a given context, with its own noise stream.
    pub fn with_context(x0: Vector, seed: u64) -> Self {
        Self {
            t: 0,
            x: x0,
            reward_noise: 0.0,
            rng: stream_rng(seed, ENV_NOISE_STREAM),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Current latent context `x_t`.
    pub fn context(&self) -> &Vector {
        &self.x
    }

    /// Advances one round and returns `y_t`.
    ///
    /// All noise for the round (transition, observation and reward) is drawn
    /// here, so the noise sequence does not depend on which arms get pulled.
    pub fn step(&mut self, gt: &GroundTruth) -> Result<Observation> {
        check_dim("context", gt.latent_dim(), self.x.len())?;
        let d = gt.latent_dim();
        let k = gt.obs_dim();
        let z_state = standard_normal(&mut self.rng, d);
        let z_obs = standard_normal(&mut self.rng, k);
        let z_reward: f64 = self.rng.sample(StandardNormal);

        self.x = &gt.transition * &self.x + &gt.process_factor * z_state;
        let y = &gt.observation * &self.x + &gt.observation_factor * z_obs;
        self.reward_noise = gt.reward_std * z_reward;
        self.t += 1;
        Ok(Observation { y })
    }

    /// Reward for pulling `arm` this round.
    pub fn reward(&self, gt: &GroundTruth, arm: usize) -> Result<f64> {
        Ok(gt.mean_reward(&self.x, arm)? + self.reward_noise)
    }
}

/// An equivalent system expressed with observation matrix `I_{k×d}`.
#[derive(Debug, Clone)]
pub struct Canonical {
    pub system: GroundTruth,
    /// The invertible change of coordinates `x̃ = T x`; its first `k` rows equal `A`.
    pub transform: Matrix,
}

/// Rewrites `gt` in coordinates where the observation matrix is `I_{k×d}`.
///
/// The change of basis keeps `A` as its first rows and completes it with an
/// orthonormal basis of the orthogonal complement of `A`'s row space. The
/// new system has `D̃ = T D T⁻¹`, `Q̃ = T Q Tᵀ` and `μ̃_a = T⁻ᵀ μ_a`, and
/// produces the same observations and expected rewards.
pub fn canonicalize(gt: &GroundTruth) -> Result<Canonical> {
    let transform = complete_basis(gt.observation())?;
    let d = gt.latent_dim();
    let inverse = transform
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::RankDeficient {
            what: "completed observation basis",
            rank: crate::linalg::numerical_rank(&transform),
            needed: d,
        })?;
    let transition = &transform * gt.transition() * &inverse;
    let mut process_noise = &transform * gt.process_noise() * transform.transpose();
    crate::linalg::symmetrize(&mut process_noise);
    let inv_t = inverse.transpose();
    let arms = gt.arms().iter().map(|mu| &inv_t * mu).collect();
    let system = GroundTruth::new(
        transition,
        process_noise,
        truncated_identity(gt.obs_dim(), d),
        gt.observation_noise().clone(),
        gt.reward_std(),
        arms,
    )?;
    Ok(Canonical { system, transform })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_system(d_val: f64, q: f64, sigma: f64) -> GroundTruth {
        GroundTruth::new(
            Matrix::from_element(1, 1, d_val),
            Matrix::from_element(1, 1, q),
            identity(1),
            Matrix::zeros(1, 1),
            sigma,
            vec![Vector::from_element(1, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn generated_transition_is_row_stochastic() {
        let params = EnvParams {
            d: 20,
            k: 10,
            arms: 15,
            eps: 0.5,
            sigma: 1.0,
            s_obs: 0.1,
        };
        let gt = generate_ground_truth(&params, 7).unwrap();
        for row in gt.transition().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        assert_eq!(gt.num_arms(), 15);
        assert_eq!(gt.obs_dim(), 10);
        assert!(gt.is_canonical());
    }

    #[test]
    fn one_by_one_transition_is_one() {
        let params = EnvParams {
            d: 1,
            k: 1,
            arms: 1,
            ..EnvParams::default()
        };
        let gt = generate_ground_truth(&params, 3).unwrap();
        assert_eq!(gt.transition()[(0, 0)], 1.0);
    }

    #[test]
    fn process_noise_is_eps_identity() {
        let params = EnvParams {
            d: 3,
            k: 2,
            arms: 2,
            eps: 0.5,
            ..EnvParams::default()
        };
        let gt = generate_ground_truth(&params, 0).unwrap();
        assert_eq!(gt.process_noise(), &(identity(3) * 0.5));
        assert_eq!(gt.observation_noise(), &(identity(2) * 0.1));
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        let bad_k = EnvParams {
            d: 2,
            k: 3,
            ..EnvParams::default()
        };
        assert!(matches!(
            generate_ground_truth(&bad_k, 0),
            Err(Error::InvalidParameter { name: "k", .. })
        ));
        let bad_eps = EnvParams {
            eps: 0.0,
            ..EnvParams::default()
        };
        assert!(generate_ground_truth(&bad_eps, 0).is_err());
    }

    #[test]
    fn identity_dynamics_without_noise_keep_context() {
        let gt = GroundTruth::new(
            identity(2),
            Matrix::zeros(2, 2),
            truncated_identity(1, 2),
            Matrix::zeros(1, 1),
            0.0,
            vec![Vector::from_vec(vec![2.0, -1.0])],
        )
        .unwrap();
        let mut state = EnvState::with_context(Vector::from_vec(vec![1.0, 2.0]), 0);
        let obs = state.step(&gt).unwrap();
        assert_eq!(state.context(), &Vector::from_vec(vec![1.0, 2.0]));
        assert_eq!(obs.y, Vector::from_vec(vec![1.0]));
        assert_eq!(state.reward(&gt, 0).unwrap(), 0.0);
        assert_eq!(state.t(), 1);
    }

    #[test]
    fn truncated_identity_picks_first_coordinate() {
        let gt = GroundTruth::new(
            identity(2),
            Matrix::zeros(2, 2),
            truncated_identity(1, 2),
            Matrix::zeros(1, 1),
            0.0,
            vec![Vector::zeros(2)],
        )
        .unwrap();
        let mut state = EnvState::with_context(Vector::from_vec(vec![3.0, 4.0]), 0);
        assert_eq!(state.step(&gt).unwrap().y[0], 3.0);
    }

    #[test]
    fn scalar_recursion_halves() {
        let gt = scalar_system(0.5, 0.0, 0.0);
        let mut state = EnvState::with_context(Vector::from_element(1, 8.0), 0);
        let path: Vec<f64> = (0..3)
            .map(|_| {
                state.step(&gt).unwrap();
                state.context()[0]
            })
            .collect();
        assert_eq!(path, vec![4.0, 2.0, 1.0]);
    }

    #[test]
    fn reward_is_inner_product_when_noiseless() {
        let gt = GroundTruth::new(
            identity(2),
            Matrix::zeros(2, 2),
            identity(2),
            Matrix::zeros(2, 2),
            0.0,
            vec![
                Vector::from_vec(vec![1.0, 0.0]),
                Vector::from_vec(vec![2.0, -1.0]),
            ],
        )
        .unwrap();
        let e1 = EnvState::with_context(Vector::from_vec(vec![1.0, 0.0]), 0);
        assert_eq!(e1.reward(&gt, 0).unwrap(), 1.0);
        let ones = EnvState::with_context(Vector::from_vec(vec![1.0, 1.0]), 0);
        assert_eq!(ones.reward(&gt, 1).unwrap(), 1.0);
        assert!(matches!(
            ones.reward(&gt, 2),
            Err(Error::ArmOutOfRange { arm: 2, arms: 2 })
        ));
    }

    #[test]
    fn reward_noise_has_requested_variance() {
        let gt = scalar_system(1.0, 0.0, 1.0);
        let mut state = EnvState::with_context(Vector::from_element(1, 0.5), 11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                state.step(&gt).unwrap();
                state.reward(&gt, 0).unwrap()
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.02);
        let var = draws.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((0.97..=1.03).contains(&var), "variance {var}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let gt = generate_ground_truth(&EnvParams::default(), 5).unwrap();
        let run = |seed| {
            let mut s = EnvState::new(&gt, seed);
            (0..50)
                .map(|_| {
                    let y = s.step(&gt).unwrap().y;
                    (s.context().clone(), y, s.reward(&gt, 3).unwrap())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn canonicalize_is_identity_on_canonical_input() {
        let gt = generate_ground_truth(
            &EnvParams {
                d: 4,
                k: 2,
                arms: 3,
                ..EnvParams::default()
            },
            1,
        )
        .unwrap();
        let c = canonicalize(&gt).unwrap();
        assert_eq!(c.transform, identity(4));
        assert_eq!(c.system.transition(), gt.transition());
        assert_eq!(c.system.process_noise(), gt.process_noise());
        assert_eq!(c.system.arms(), gt.arms());
    }

    #[test]
    fn canonicalize_row_sum_observation() {
        let gt = GroundTruth::new(
            Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.2, 0.3]),
            identity(2) * 0.2,
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Matrix::from_element(1, 1, 0.1),
            0.0,
            vec![Vector::from_vec(vec![1.0, -2.0])],
        )
        .unwrap();
        let c = canonicalize(&gt).unwrap();
        assert!(c.system.is_canonical());
        // first canonical coordinate is x1 + x2
        let x = Vector::from_vec(vec![0.7, -1.9]);
        let xt = &c.transform * &x;
        assert!((xt[0] - (0.7 - 1.9)).abs() < 1e-14);
        // rewards are preserved: ⟨T x, T⁻ᵀ μ⟩ = ⟨x, μ⟩
        let r = c.system.mean_reward(&xt, 0).unwrap();
        assert!((r - gt.mean_reward(&x, 0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn canonicalize_rejects_rank_deficient_observation() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 2.0, 0.0, 2.0]);
        let err = GroundTruth::new(
            identity(3),
            identity(3),
            a,
            identity(2),
            1.0,
            vec![Vector::zeros(3)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }
}
