//! Fixtures shared by the benchmarks: a default-sized instance, a filter
//! warmed up on it, and arms that have seen some data.

use emkf_core::env::stream_rng;
use emkf_core::linalg::standard_normal;
use emkf_core::{
    generate_ground_truth, ArmStats, EnvParams, EnvState, FilterState, GroundTruth, RunConfig,
    Vector,
};

pub const SEED: u64 = 17;

pub fn instance() -> GroundTruth {
    generate_ground_truth(&EnvParams::default(), SEED).expect("default parameters are valid")
}

/// Filter on the true model after `warmup` rounds, plus the next `rounds`
/// observations to feed it.
pub fn warm_filter(gt: &GroundTruth, warmup: usize, rounds: usize) -> (FilterState, Vec<Vector>) {
    let mut env = EnvState::new(gt, SEED);
    let mut fs = FilterState::new(
        gt.observation().clone(),
        gt.observation_noise().clone(),
        gt.transition().clone(),
        gt.process_noise().clone(),
    )
    .expect("generated model is valid");
    for _ in 0..warmup {
        let obs = env.step(gt).expect("step");
        fs.filter_round(&obs.y).expect("filter");
    }
    let ys = (0..rounds).map(|_| env.step(gt).expect("step").y).collect();
    (fs, ys)
}

/// `arms` arms in dimension `d`, each updated `pulls` times with random data.
pub fn trained_arms(arms: usize, d: usize, pulls: usize) -> Vec<ArmStats> {
    let mut rng = stream_rng(SEED, 50);
    (0..arms)
        .map(|_| {
            let mut stats = ArmStats::new(d);
            for _ in 0..pulls {
                let x = standard_normal(&mut rng, d);
                let r = standard_normal(&mut rng, 1)[0];
                stats.update(&x, r).expect("update");
            }
            stats
        })
        .collect()
}

/// Default configuration with a shorter horizon.
pub fn short_run(horizon: u64) -> RunConfig {
    RunConfig {
        horizon,
        ..RunConfig::default()
    }
}
