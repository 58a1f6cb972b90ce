//! Latent-context estimation for linear contextual bandits.
//!
//! A Kalman filter tracks the hidden context of a partially observed linear
//! dynamical system, a windowed least-squares M-step re-estimates the
//! transition model, and the filtered context drives Thompson sampling or
//! LinUCB. The crate also provides the simulator, the baselines used for
//! comparison and the regret bookkeeping.

pub mod bandit;
pub mod env;
pub mod error;
pub mod kalman;
pub mod linalg;
pub mod pipeline;
pub mod regret;
pub mod sysid;

pub use bandit::{ts_select, ucb_select, ArmStats, TsConfig, UcbConfig};
pub use env::{
    canonicalize, generate_ground_truth, Canonical, EnvParams, EnvState, GroundTruth, Observation,
};
pub use error::{Error, Result};
pub use kalman::{FilterState, FilterStep, Prediction};
pub use linalg::{Matrix, Vector};
pub use pipeline::{
    run_episode, run_episode_on, run_suite, AccessCounts, Agent, AgentKind, EmkfEstimator, Episode,
    InitialModel, RoundInputs, RunConfig, Suite,
};
pub use regret::{
    decomposition_check, inst_regret, oracle_arm, summarize, AgentSummary, Checkpoint, StepRecord,
    SummaryOptions,
};
pub use sysid::{ModelEstimate, Ridge, SysIdAccumulators, SysIdConfig};
