//! Small dense linear-algebra helpers shared by the filter, the identifier
//! and the bandits. Everything here works on `nalgebra` dynamic matrices.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues in `(-PSD_CLIP_BAND, 0)` are treated as round-off and clipped.
pub const PSD_CLIP_BAND: f64 = 1e-8;

/// Replaces `m` by `(m + mᵀ) / 2` in place.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Symmetrize and clip the spectrum from below at `floor`.
pub fn psd_project(m: &Matrix, floor: f64) -> Matrix {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let mut out = v * Matrix::from_diagonal(&clipped) * v.transpose();
    symmetrize(&mut out);
    out
}

/// Symmetrize a covariance and repair round-off negativity.
///
/// A matrix that admits a Cholesky factor is left alone. Otherwise, if the
/// smallest eigenvalue sits in `(-PSD_CLIP_BAND, 0)` the spectrum is clipped
/// at zero. Returns the smallest eigenvalue seen before clipping (or `None`
/// when the Cholesky shortcut applied).
pub fn stabilize_covariance(m: &mut Matrix) -> Option<f64> {
    symmetrize(m);
    if Cholesky::new(m.clone()).is_some() {
        return None;
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < 0.0 && min > -PSD_CLIP_BAND {
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let v = &eig.eigenvectors;
        *m = v * Matrix::from_diagonal(&clipped) * v.transpose();
        symmetrize(m);
    }
    Some(min)
}

/// Returns `F` with `F Fᵀ = m` for a symmetric PSD `m`.
///
/// Uses the Cholesky factor when `m` is positive definite and falls back to
/// the symmetric square root for singular (e.g. zero) covariances.
pub fn covariance_factor(m: &Matrix, what: &'static str) -> Result<Matrix> {
    if !is_symmetric(m, 1e-9 * (1.0 + m.amax())) {
        return Err(Error::NotPositiveSemidefinite(what));
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(m.clone());
    let scale = 1.0 + m.amax();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::NotPositiveSemidefinite(what));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots))
}

pub fn check_psd(m: &Matrix, what: &'static str) -> Result<()> {
    covariance_factor(m, what).map(|_| ())
}

/// Spectral norm of the inverse of a symmetric positive definite matrix,
/// i.e. `1 / λ_min(m)`.
pub fn inverse_spectral_norm(m: &Matrix) -> f64 {
    let min = min_eigenvalue(m);
    if min > 0.0 {
        min.recip()
    } else {
        f64::INFINITY
    }
}

/// Solves `m x = b` for symmetric positive definite `m`.
pub fn spd_solve(m: &Matrix, b: &Matrix) -> Option<Matrix> {
    Cholesky::new(m.clone()).map(|c| c.solve(b))
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

/// The truncated identity `I_{k×d}`: the `d×d` identity with rows `k..d` removed.
pub fn truncated_identity(k: usize, d: usize) -> Matrix {
    Matrix::from_fn(k, d, |i, j| if i == j { 1.0 } else { 0.0 })
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Numerical rank from singular values relative to the largest one.
pub fn numerical_rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let tol = max * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

/// Completes the row space of a full-row-rank `a` (`k×d`) to a basis of
/// `R^d` by appending an orthonormal basis of its orthogonal complement.
///
/// Complement vectors are produced by Gram–Schmidt over `e_1..e_d`, so when
/// `a = I_{k×d}` the result is exactly the identity.
pub fn complete_basis(a: &Matrix) -> Result<Matrix> {
    let (k, d) = a.shape();
    if k > d {
        return Err(Error::InvalidParameter {
            name: "observation matrix",
            reason: format!("has {k} rows but only {d} columns"),
        });
    }
    let rank = numerical_rank(a);
    if rank < k {
        return Err(Error::RankDeficient {
            what: "observation matrix",
            rank,
            needed: k,
        });
    }

    // Orthonormal basis of the row space, used only for projections.
    let mut basis: Vec<Vector> = Vec::with_capacity(d);
    for i in 0..k {
        let row = a.row(i).transpose();
        if let Some(v) = orthonormalize(&row, &basis) {
            basis.push(v);
        }
    }
    let mut complement: Vec<Vector> = Vec::with_capacity(d - k);
    for j in 0..d {
        if basis.len() == d {
            break;
        }
        let mut e = Vector::zeros(d);
        e[j] = 1.0;
        if let Some(v) = orthonormalize(&e, &basis) {
            basis.push(v.clone());
            complement.push(v);
        }
    }

    let mut full = Matrix::zeros(d, d);
    full.rows_mut(0, k).copy_from(a);
    for (i, v) in complement.iter().enumerate() {
        full.row_mut(k + i).copy_from(&v.transpose());
    }
    Ok(full)
}

fn orthonormalize(v: &Vector, basis: &[Vector]) -> Option<Vector> {
    let mut w = v.clone();
    // Two passes of modified Gram–Schmidt.
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&w);
            w.axpy(-c, b, 1.0);
        }
    }
    let norm = w.norm();
    if norm > 1e-10 * v.norm().max(1.0) {
        Some(w / norm)
    } else {
        None
    }
}

/// Index of the maximum, lowest index on ties. `None` for empty input.
pub fn argmax_lowest<I: IntoIterator<Item = f64>>(scores: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}
