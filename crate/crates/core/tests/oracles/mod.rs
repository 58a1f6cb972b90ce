//! Brute-force reference implementations used by the integration tests and
//! the acceptance runner. None of these share code paths with the library.

#![allow(dead_code)]

use emkf_core::env::stream_rng;
use emkf_core::linalg::identity;
use emkf_core::{
    ArmStats, EmkfEstimator, EnvState, FilterState, GroundTruth, Matrix, Ridge, SysIdAccumulators,
    SysIdConfig, Vector,
};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `G Gᵀ / n + floor·I`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Matrix {
    let g = gaussian_matrix(rng, n, n);
    let m = &g * g.transpose() / n as f64 + Matrix::identity(n, n) * floor;
    (&m + m.transpose()) * 0.5
}

/// Gaussian matrix rescaled to spectral norm `radius`.
pub fn random_contraction<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Matrix {
    let g = gaussian_matrix(rng, n, n);
    let norm = g.clone().svd(false, false).singular_values.max();
    g * (radius / norm)
}

/// `radius` times a Haar-ish orthogonal matrix (Q factor of a Gaussian).
pub fn random_scaled_orthogonal<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Matrix {
    gaussian_matrix(rng, n, n).qr().q() * radius
}

/// Joint-Gaussian posterior of every `x_t` given `y_1..y_t`, computed by
/// building the full covariance of `(x_1..x_T, y_1..y_T)` under
/// `x_0 ~ N(0, I)` and conditioning directly.
pub fn conditioning_filter(
    transition: &Matrix,
    process_noise: &Matrix,
    observation: &Matrix,
    observation_noise: &Matrix,
    ys: &[Vector],
) -> Vec<(Vector, Matrix)> {
    let d = transition.nrows();
    let k = observation.nrows();
    let n = ys.len();

    // Marginal covariances V_t = Cov(x_t); V_0 = I.
    let mut marg = Vec::with_capacity(n + 1);
    marg.push(Matrix::identity(d, d));
    for t in 1..=n {
        let prev = &marg[t - 1];
        marg.push(transition * prev * transition.transpose() + process_noise);
    }
    // Cov(x_t, x_s) = D^{t-s} V_s for t ≥ s.
    let mut powers = vec![Matrix::identity(d, d)];
    for i in 1..=n {
        powers.push(transition * &powers[i - 1]);
    }
    let cross = |t: usize, s: usize| -> Matrix {
        if t >= s {
            &powers[t - s] * &marg[s]
        } else {
            (&powers[s - t] * &marg[t]).transpose()
        }
    };

    let mut out = Vec::with_capacity(n);
    for (t, v_t) in marg.iter().enumerate().skip(1) {
        let m = t * k;
        let mut c_yy = Matrix::zeros(m, m);
        let mut c_xy = Matrix::zeros(d, m);
        let mut y_stack = Vector::zeros(m);
        for i in 1..=t {
            y_stack.rows_mut((i - 1) * k, k).copy_from(&ys[i - 1]);
            c_xy.view_mut((0, (i - 1) * k), (d, k))
                .copy_from(&(cross(t, i) * observation.transpose()));
            for j in 1..=t {
                let mut block = observation * cross(i, j) * observation.transpose();
                if i == j {
                    block += observation_noise;
                }
                c_yy.view_mut(((i - 1) * k, (j - 1) * k), (k, k))
                    .copy_from(&block);
            }
        }
        let lu = c_yy.lu();
        let gain_t = lu
            .solve(&c_xy.transpose())
            .expect("observation covariance is singular");
        let mean = gain_t.transpose() * &y_stack;
        let cov = v_t - c_xy * gain_t;
        out.push((mean, cov));
    }
    out
}

/// Ridge regression of `x_t` on `x_{t-1}` over the sequence `xs`, solved as
/// the augmented least-squares problem `[X_prevᵀ; √λ I] Dᵀ ≈ [X_curᵀ; 0]`
/// by SVD. Returns `D̂` and the raw residual moment `(Y − D̂Ψᵀ)/n`.
pub fn batch_ridge_transition(xs: &[Vector], lambda: f64) -> (Matrix, Matrix) {
    let d = xs[0].len();
    let n = xs.len() - 1;
    let mut lhs = Matrix::zeros(n + d, d);
    let mut rhs = Matrix::zeros(n + d, d);
    for i in 0..n {
        lhs.row_mut(i).copy_from(&xs[i].transpose());
        rhs.row_mut(i).copy_from(&xs[i + 1].transpose());
    }
    for j in 0..d {
        lhs[(n + j, j)] = lambda.sqrt();
    }
    let dt = lhs.svd(true, true).solve(&rhs, 0.0).expect("svd solve");
    let transition = dt.transpose();

    let mut y = Matrix::zeros(d, d);
    let mut psi = Matrix::zeros(d, d);
    for i in 0..n {
        y += &xs[i + 1] * xs[i + 1].transpose();
        psi += &xs[i + 1] * xs[i].transpose();
    }
    let raw = (y - &transition * psi.transpose()) / n as f64;
    (transition, raw)
}

/// Unit-ridge regression `argmin ‖r − Xμ‖² + ‖μ‖²` by SVD on the augmented
/// system `[X; I] μ ≈ [r; 0]`.
pub fn batch_unit_ridge(xs: &[Vector], rs: &[f64], d: usize) -> Vector {
    let n = xs.len();
    let mut lhs = Matrix::zeros(n + d, d);
    let mut rhs = Vector::zeros(n + d);
    for (i, (x, r)) in xs.iter().zip(rs).enumerate() {
        lhs.row_mut(i).copy_from(&x.transpose());
        rhs[i] = *r;
    }
    for j in 0..d {
        lhs[(n + j, j)] = 1.0;
    }
    lhs.svd(true, true).solve(&rhs, 0.0).expect("svd solve")
}

/// Symmetric eigenvalue floor by explicit eigendecomposition.
pub fn floor_spectrum(m: &Matrix, floor: f64) -> Matrix {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    &eig.eigenvectors * Matrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Both sides of `Δ_a ≤ 2 M₁ ‖x − x̂‖ + Δ̂_a` evaluated by plain loops.
pub fn decomposition_sides(x: &Vector, x_hat: &Vector, mu: &[Vector], arm: usize) -> (f64, f64) {
    let dot = |u: &Vector, v: &Vector| u.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
    let best_true = mu
        .iter()
        .map(|m| dot(x, m))
        .fold(f64::NEG_INFINITY, f64::max);
    let best_est = mu
        .iter()
        .map(|m| dot(x_hat, m))
        .fold(f64::NEG_INFINITY, f64::max);
    let m1 = mu.iter().map(|m| dot(m, m).sqrt()).fold(0.0, f64::max);
    let err = x
        .iter()
        .zip(x_hat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let lhs = best_true - dot(x, &mu[arm]);
    let rhs = 2.0 * m1 * err + best_est - dot(x_hat, &mu[arm]);
    (lhs, rhs)
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax()
}

pub fn max_abs_diff_vec(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax()
}

// Scenario drivers shared by the tests and the acceptance runner. Each
// returns the worst discrepancy against the matching oracle above.

/// Random model with `d ≤ 4`, `k ≤ 2`, `T ≤ 20`; filter vs conditioning.
pub fn filter_oracle_error(seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, 100);
    let d = rng.random_range(1..=4);
    let k = rng.random_range(1..=d.min(2));
    let horizon = rng.random_range(1..=20);
    let radius = rng.random_range(0.3..1.1);
    let transition = random_contraction(&mut rng, d, radius);
    let process_noise = random_spd(&mut rng, d, 0.05);
    let observation = gaussian_matrix(&mut rng, k, d);
    let observation_noise = random_spd(&mut rng, k, 0.1);

    let mut x = gaussian_vector(&mut rng, d);
    let q_factor = process_noise.clone().cholesky().unwrap().l();
    let s_factor = observation_noise.clone().cholesky().unwrap().l();
    let mut ys = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        x = &transition * &x + &q_factor * gaussian_vector(&mut rng, d);
        ys.push(&observation * &x + &s_factor * gaussian_vector(&mut rng, k));
    }

    let expected = conditioning_filter(
        &transition,
        &process_noise,
        &observation,
        &observation_noise,
        &ys,
    );
    let mut fs = FilterState::new(observation, observation_noise, transition, process_noise)
        .expect("valid model");
    let (mut mean_err, mut cov_err) = (0.0f64, 0.0f64);
    for (y, (mean, cov)) in ys.iter().zip(&expected) {
        fs.filter_round(y).expect("filter step");
        mean_err = mean_err.max(max_abs_diff_vec(fs.mean(), mean));
        cov_err = cov_err.max(max_abs_diff(fs.cov(), cov));
    }
    (mean_err, cov_err)
}

/// One random window with `d ≤ 10`, `n ≤ 200` pairs; accumulator solve vs
/// batch ridge. Returns the max abs error over `D̂`, raw `Q̂` and floored `Q̂`.
pub fn ridge_window_error(seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 101);
    let d = rng.random_range(1..=10);
    let n = rng.random_range((2 * d).max(4)..=200);
    let lambda = if rng.random_bool(0.5) {
        Ridge::Absolute(rng.random_range(0.0..2.0))
    } else {
        Ridge::TraceScaled(rng.random_range(1e-6..0.5))
    };
    let q_min = rng.random_range(1e-6..0.2);
    let transition = random_contraction(&mut rng, d, 0.95);
    let mut xs = vec![gaussian_vector(&mut rng, d)];
    for i in 0..n {
        let next = &transition * &xs[i] + gaussian_vector(&mut rng, d) * 0.5;
        xs.push(next);
    }

    let cfg = SysIdConfig {
        window: n as u64 + 1,
        ridge: lambda,
        q_min,
        min_pairs: 1,
    };
    let mut acc = SysIdAccumulators::new(d, cfg).unwrap();
    for x in &xs {
        acc.push(x).unwrap();
    }
    let est = acc.solve().unwrap();

    let mut lagged = Matrix::zeros(d, d);
    for x in &xs[..n] {
        lagged += x * x.transpose();
    }
    let lambda_value = match lambda {
        Ridge::Absolute(l) => l,
        Ridge::TraceScaled(c) => c * lagged.trace() / d as f64,
    };
    let (want_d, want_raw) = batch_ridge_transition(&xs, lambda_value);
    let want_q = floor_spectrum(&want_raw, q_min);
    max_abs_diff(&est.transition, &want_d)
        .max(max_abs_diff(&est.process_noise_raw, &want_raw))
        .max(max_abs_diff(&est.process_noise, &want_q))
}

/// One fuzzed arm history; `ArmStats` vs batch unit-ridge regression.
pub fn unit_ridge_error(seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 102);
    let d = rng.random_range(1..=12);
    let pulls = rng.random_range(0..=80);
    let scale = rng.random_range(0.1..5.0);
    let theta = gaussian_vector(&mut rng, d);
    let mut stats = ArmStats::new(d);
    let mut xs = Vec::with_capacity(pulls);
    let mut rs = Vec::with_capacity(pulls);
    for _ in 0..pulls {
        let x = gaussian_vector(&mut rng, d) * scale;
        let r = x.dot(&theta) + rng.sample::<f64, _>(StandardNormal);
        stats.update(&x, r).unwrap();
        xs.push(x);
        rs.push(r);
    }
    max_abs_diff_vec(stats.mean(), &batch_unit_ridge(&xs, &rs, d))
}

/// `count` random tuples with `d ≤ 10`; returns how many violate the
/// decomposition bound according to the library, and how many according to
/// the loop oracle.
pub fn decomposition_fuzz(count: usize, seed: u64) -> (usize, usize) {
    let mut rng = stream_rng(seed, 103);
    let (mut lib, mut oracle) = (0, 0);
    for _ in 0..count {
        let d = rng.random_range(1..=10);
        let k = rng.random_range(1..=8);
        let spread = rng.random_range(0.01..10.0);
        let x = gaussian_vector(&mut rng, d) * spread;
        let x_hat = if rng.random_bool(0.1) {
            x.clone()
        } else {
            &x + gaussian_vector(&mut rng, d) * rng.random_range(0.0..3.0)
        };
        let mu: Vec<Vector> = (0..k).map(|_| gaussian_vector(&mut rng, d)).collect();
        let arm = rng.random_range(0..k);
        if !emkf_core::decomposition_check(&x, &x_hat, &mu, arm).unwrap() {
            lib += 1;
        }
        let (lhs, rhs) = decomposition_sides(&x, &x_hat, &mu, arm);
        if lhs > rhs + 1e-9 * (1.0 + lhs.abs().max(rhs.abs())) {
            oracle += 1;
        }
    }
    (lib, oracle)
}

/// Fully observed, noiseless system (`k = d`, `Σ = 0`, `Q = 0`) together
/// with a starting context that excites every mode.
///
/// `D = 0.95·U R Uᵀ` with `U` random orthogonal and `R` block-diagonal
/// rotations by well-separated angles in `[π/8, 7π/8]` (plus `±1` for odd
/// `d`). `x₀ = U c`
/// puts unit energy into each invariant subspace, so the trajectory spans
/// `ℝ^d` with a well-conditioned `X`.
pub fn noiseless_system(d: usize, seed: u64) -> (GroundTruth, Vector) {
    use std::f64::consts::PI;
    let mut rng = stream_rng(seed, 7);
    let basis = random_scaled_orthogonal(&mut rng, d, 1.0);
    let mut blocks = Matrix::zeros(d, d);
    let mut coords = Vector::zeros(d);
    let planes = d / 2;
    for p in 0..planes {
        let slot = (p as f64 + rng.random_range(0.25..0.75)) / planes as f64;
        let theta = PI / 8.0 + slot * 0.75 * PI;
        let (s, c) = theta.sin_cos();
        let i = 2 * p;
        blocks[(i, i)] = c;
        blocks[(i, i + 1)] = -s;
        blocks[(i + 1, i)] = s;
        blocks[(i + 1, i + 1)] = c;
        coords[i] = 1.0;
    }
    if d % 2 == 1 {
        blocks[(d - 1, d - 1)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        coords[d - 1] = 1.0;
    }
    let transition = &basis * blocks * basis.transpose() * 0.95;
    let gt = GroundTruth::new(
        transition,
        Matrix::zeros(d, d),
        identity(d),
        Matrix::zeros(d, d),
        0.0,
        vec![Vector::zeros(d)],
    )
    .unwrap();
    (gt, basis * coords)
}

/// Filters the system from `D̂₀ = I`, `Q̂₀ = I` and returns the first
/// `windows` model estimates `(D̂, Q̂)`.
pub fn identify(
    gt: &GroundTruth,
    x0: &Vector,
    window: u64,
    ridge: Ridge,
    seed: u64,
    windows: usize,
) -> Vec<(Matrix, Matrix)> {
    let d = gt.latent_dim();
    let cfg = SysIdConfig {
        ridge,
        ..SysIdConfig::for_dim(d, window)
    };
    let mut est = EmkfEstimator::new(
        gt.observation().clone(),
        gt.observation_noise().clone(),
        identity(d),
        identity(d),
        cfg,
    )
    .unwrap();
    let mut env = EnvState::with_context(x0.clone(), seed);
    let mut out = Vec::new();
    let mut t = 0;
    while out.len() < windows {
        t += 1;
        let obs = env.step(gt).unwrap();
        if let (_, Some(m)) = est.observe(t, &obs.y).unwrap() {
            out.push((m.transition, m.process_noise));
        }
    }
    out
}

/// First-window identification error `‖D̂ − D‖_F` and the largest distance
/// of a `Q̂` eigenvalue from `q_min = 1e-6`, for window `L = 2d + 2`.
pub fn noiseless_identification(d: usize, seed: u64, ridge: Ridge) -> (f64, f64) {
    let (gt, x0) = noiseless_system(d, seed);
    let (d_hat, q_hat) = identify(&gt, &x0, 2 * d as u64 + 2, ridge, seed, 1).remove(0);
    let floor_gap = q_hat
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|ev| (ev - 1e-6).abs())
        .fold(0.0, f64::max);
    ((&d_hat - gt.transition()).norm(), floor_gap)
}
