//! Online Kalman filter over the latent context, run with the current model
//! estimates `(D̂, Q̂)` and the known observation model `(A, Σ)`.

use nalgebra::Cholesky;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{check_psd, identity, stabilize_covariance, Matrix, Vector};

/// Filtered estimate `(x_{t|t}, P_{t|t})` plus the model it filters with.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    mean: Vector,
    cov: Matrix,
    transition: Matrix,
    process_noise: Matrix,
    observation: Matrix,
    observation_noise: Matrix,
    /// Smallest eigenvalue seen on a covariance that failed a Cholesky
    /// check, before clipping.
    min_eigenvalue_seen: f64,
}

/// One-step prediction `(x_{t|t-1}, P_{t|t-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vector,
    pub cov: Matrix,
}

/// Diagnostics of a measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub prediction: Prediction,
    /// `e_t = y_t − A x_{t|t-1}`.
    pub innovation: Vector,
    /// `S_t = A P_{t|t-1} Aᵀ + Σ`.
    pub innovation_cov: Matrix,
    /// `K_t = P_{t|t-1} Aᵀ S_t⁻¹`.
    pub gain: Matrix,
}

impl FilterState {
    /// Filter with prior `x_{0|0} = 0`, `P_{0|0} = I`.
    pub fn new(
        observation: Matrix,
        observation_noise: Matrix,
        transition: Matrix,
        process_noise: Matrix,
    ) -> Result<Self> {
        let d = observation.ncols();
        Self::with_prior(
            Vector::zeros(d),
            identity(d),
            observation,
            observation_noise,
            transition,
            process_noise,
        )
    }

    pub fn with_prior(
        mean: Vector,
        cov: Matrix,
        observation: Matrix,
        observation_noise: Matrix,
        transition: Matrix,
        process_noise: Matrix,
    ) -> Result<Self> {
        let d = observation.ncols();
        let k = observation.nrows();
        check_dim("prior mean", d, mean.len())?;
        check_dim("prior covariance rows", d, cov.nrows())?;
        check_dim("prior covariance columns", d, cov.ncols())?;
        check_dim("observation noise rows", k, observation_noise.nrows())?;
        check_dim("observation noise columns", k, observation_noise.ncols())?;
        check_psd(&cov, "prior covariance")?;
        check_psd(&observation_noise, "observation noise covariance")?;
        let mut fs = Self {
            mean,
            cov,
            transition: Matrix::zeros(d, d),
            process_noise: Matrix::zeros(d, d),
            observation,
            observation_noise,
            min_eigenvalue_seen: f64::INFINITY,
        };
        fs.set_model(transition, process_noise)?;
        Ok(fs)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `x_{t|t}`.
    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    /// `P_{t|t}`.
    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn process_noise(&self) -> &Matrix {
        &self.process_noise
    }

    /// Smallest pre-clip eigenvalue encountered on a covariance that was not
    /// positive definite; `+∞` if every covariance was.
    pub fn min_eigenvalue_seen(&self) -> f64 {
        self.min_eigenvalue_seen
    }

    /// Installs new model estimates. The filtered mean and covariance carry
    /// over unchanged.
    pub fn set_model(&mut self, transition: Matrix, process_noise: Matrix) -> Result<()> {
        let d = self.dim();
        check_dim("transition rows", d, transition.nrows())?;
        check_dim("transition columns", d, transition.ncols())?;
        check_dim("process noise rows", d, process_noise.nrows())?;
        check_dim("process noise columns", d, process_noise.ncols())?;
        check_psd(&process_noise, "process noise estimate")?;
        self.transition = transition;
        self.process_noise = process_noise;
        Ok(())
    }

    pub fn predict(&self) -> Prediction {
        let mean = &self.transition * &self.mean;
        let mut cov =
            &self.transition * &self.cov * self.transition.transpose() + &self.process_noise;
        stabilize_covariance(&mut cov);
        Prediction { mean, cov }
    }

    /// Measurement update from a prediction made this round.
    pub fn update(&mut self, prediction: Prediction, y: &Vector) -> Result<FilterStep> {
        let k = self.observation.nrows();
        check_dim("observation", k, y.len())?;
        let a = &self.observation;
        let innovation = y - a * &prediction.mean;
        let pa_t = &prediction.cov * a.transpose();
        let mut innovation_cov = a * &pa_t + &self.observation_noise;
        crate::linalg::symmetrize(&mut innovation_cov);
        let chol = Cholesky::new(innovation_cov.clone()).ok_or(Error::SingularInnovation)?;
        // K = P Aᵀ S⁻¹, i.e. K S = P Aᵀ; solve S Kᵀ = A P.
        let gain = chol.solve(&pa_t.transpose()).transpose();

        self.mean = &prediction.mean + &gain * &innovation;
        let mut cov = (identity(self.dim()) - &gain * a) * &prediction.cov;
        if let Some(min) = stabilize_covariance(&mut cov) {
            self.min_eigenvalue_seen = self.min_eigenvalue_seen.min(min);
        }
        self.cov = cov;
        Ok(FilterStep {
            prediction,
            innovation,
            innovation_cov,
            gain,
        })
    }

    /// Predict then update; returns `x̂_t = x_{t|t}`.
    pub fn filter_round(&mut self, y: &Vector) -> Result<&Vector> {
        let prediction = self.predict();
        self.update(prediction, y)?;
        Ok(&self.mean)
    }
}
