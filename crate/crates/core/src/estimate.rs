//! Empirical distribution and density of a path, the discretized
//! log-likelihood and the drift MLE.
//!
//! All path sums use left endpoints: `Σ_i φ(X_i)(X_{i+1} - X_i)` is the Itô
//! discretization of `∫ φ(X_t) dX_t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::models::{check_theta, DiffusionModel};
use crate::simulate::Path;
use crate::{Error, Result};

/// `F̂_T(x) = (1/T) Σ_i 1{X_i < x} Δ`.
pub fn empirical_cdf(path: &Path, x: f64) -> f64 {
    let xs = &path.values()[..path.n_steps()];
    xs.iter().filter(|&&v| v < x).count() as f64 / xs.len() as f64
}

/// `F̂_T` at every point of `xs` from one sort of the path.
pub fn empirical_cdf_curve(path: &Path, xs: &[f64]) -> Vec<f64> {
    let mut sorted = path.values()[..path.n_steps()].to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    xs.iter().map(|&x| sorted.partition_point(|&v| v < x) as f64 / n).collect()
}

/// Local time by the discretized Tanaka formula
/// `Λ_T(x) = |X_T - x| - |X_0 - x| - Σ_i sgn(X_i - x) ΔX_i`, with `sgn(0) = -1`.
pub fn local_time(path: &Path, x: f64) -> f64 {
    let v = path.values();
    let n = path.n_steps();
    let mut sum = 0.0;
    for i in 0..n {
        let dx = v[i + 1] - v[i];
        sum += if v[i] > x { dx } else { -dx };
    }
    (v[n] - x).abs() - (v[0] - x).abs() - sum
}

/// `f̂_T(x) = Λ_T(x) / (σ(x)² T)`; may be slightly negative.
pub fn empirical_density(path: &Path, x: f64, sigma_at_x: f64) -> f64 {
    local_time(path, x) / (sigma_at_x * sigma_at_x * path.horizon())
}

/// Density estimator used for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityEstimator {
    /// Tanaka local time, bandwidth free.
    LocalTime,
    /// Gaussian kernel smoothing of the occupation measure.
    Kernel { bandwidth: f64 },
}

/// Density estimate at every point of `xs`.
///
/// The local-time route sorts `(X_i, ΔX_i)` once and uses
/// `Σ sgn(X_i - x) ΔX_i = Σ ΔX_i - 2 Σ_{X_i ≤ x} ΔX_i`.
pub fn empirical_density_curve<S>(path: &Path, xs: &[f64], sigma: S, estimator: DensityEstimator) -> Vec<f64>
where
    S: Fn(f64) -> f64,
{
    let v = path.values();
    let n = path.n_steps();
    match estimator {
        DensityEstimator::LocalTime => {
            let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (v[i], v[i + 1] - v[i])).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0.0);
            for &(_, dx) in &pairs {
                prefix.push(prefix.last().unwrap() + dx);
            }
            let total = prefix[n];
            xs.iter()
                .map(|&x| {
                    let k = pairs.partition_point(|p| p.0 <= x);
                    let signed = total - 2.0 * prefix[k];
                    let lt = (v[n] - x).abs() - (v[0] - x).abs() - signed;
                    let s = sigma(x);
                    lt / (s * s * path.horizon())
                })
                .collect()
        }
        DensityEstimator::Kernel { bandwidth } => {
            let c = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt() * n as f64);
            xs.iter()
                .map(|&x| {
                    c * v[..n]
                        .iter()
                        .map(|&xi| {
                            let u = (x - xi) / bandwidth;
                            (-0.5 * u * u).exp()
                        })
                        .sum::<f64>()
                })
                .collect()
        }
    }
}

fn evaluation_error(x: f64, what: &str) -> Error {
    Error::Evaluation { x, what: what.to_string() }
}

/// `ℓ(θ) = Σ S/σ² ΔX_i - ½ Σ S²/σ² Δ`.
pub fn log_likelihood(model: &dyn DiffusionModel, path: &Path, theta: &[f64]) -> Result<f64> {
    check_theta(model, theta)?;
    let v = path.values();
    let dt = path.dt();
    let mut l = 0.0;
    for i in 0..path.n_steps() {
        let x = v[i];
        let s = model.drift(theta, x);
        let sig = model.sigma(x);
        let term = s / (sig * sig) * (v[i + 1] - x - 0.5 * s * dt);
        if !term.is_finite() {
            return Err(evaluation_error(x, "log-likelihood summand is not finite"));
        }
        l += term;
    }
    Ok(l)
}

/// Log-likelihood, score `Σ Ṡ/σ² ΔX - Σ S Ṡ/σ² Δ` and the scoring matrix
/// `J = Σ Ṡ Ṡ*/σ² Δ`.
pub fn likelihood_parts(
    model: &dyn DiffusionModel,
    path: &Path,
    theta: &[f64],
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    check_theta(model, theta)?;
    let d = model.dim();
    let v = path.values();
    let dt = path.dt();
    let mut l = 0.0;
    let mut score = DVector::<f64>::zeros(d);
    let mut j = DMatrix::<f64>::zeros(d, d);
    let mut grad = vec![0.0; d];
    for i in 0..path.n_steps() {
        let x = v[i];
        let s = model.drift(theta, x);
        let sig = model.sigma(x);
        let w = 1.0 / (sig * sig);
        let resid = v[i + 1] - x - s * dt;
        model.drift_grad(theta, x, &mut grad);
        l += s * w * (v[i + 1] - x - 0.5 * s * dt);
        for a in 0..d {
            score[a] += grad[a] * w * resid;
            for b in 0..=a {
                j[(a, b)] += grad[a] * grad[b] * w * dt;
            }
        }
        if !l.is_finite() || score.iter().any(|c| !c.is_finite()) {
            return Err(evaluation_error(x, "likelihood terms are not finite"));
        }
    }
    for a in 0..d {
        for b in 0..a {
            j[(b, a)] = j[(a, b)];
        }
    }
    Ok((l, score, j))
}

/// Score vector `∂ℓ/∂θ`.
pub fn score(model: &dyn DiffusionModel, path: &Path, theta: &[f64]) -> Result<Vec<f64>> {
    Ok(likelihood_parts(model, path, theta)?.1.as_slice().to_vec())
}

/// Outcome of [`mle_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta_hat: Vec<f64>,
    pub loglik: f64,
    pub n_evals: usize,
    pub converged: bool,
    pub boundary_hit: bool,
}

/// Distance to a box face that counts as hitting the boundary.
pub const BOUNDARY_TOL: f64 = 1e-6;

const STARTS: usize = 3;
const MAX_ITER: usize = 200;
const ARMIJO: f64 = 1e-4;

fn grid_points(d: usize) -> usize {
    if d <= 2 {
        32
    } else {
        11
    }
}

struct Objective<'a> {
    model: &'a dyn DiffusionModel,
    path: &'a Path,
    evals: usize,
}

impl Objective<'_> {
    fn value(&mut self, theta: &[f64]) -> Option<f64> {
        self.evals += 1;
        log_likelihood(self.model, self.path, theta).ok()
    }

    fn parts(&mut self, theta: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        self.evals += 1;
        likelihood_parts(self.model, self.path, theta).ok()
    }
}

fn clamp_box(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, &(lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(lo, hi);
    }
}

/// Gradient with components pinned at an active bound zeroed.
fn projected(grad: &DVector<f64>, theta: &[f64], bounds: &[(f64, f64)]) -> DVector<f64> {
    let mut p = grad.clone();
    for k in 0..p.len() {
        let (lo, hi) = bounds[k];
        if (theta[k] <= lo && p[k] < 0.0) || (theta[k] >= hi && p[k] > 0.0) {
            p[k] = 0.0;
        }
    }
    p
}

fn initial_inverse(j: &DMatrix<f64>) -> DMatrix<f64> {
    let d = j.nrows();
    j.clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| DMatrix::identity(d, d))
}

/// Projected BFGS ascent from `start`; returns `(θ, ℓ, converged)`.
fn refine(obj: &mut Objective, start: Vec<f64>, bounds: &[(f64, f64)]) -> Option<(Vec<f64>, f64, bool)> {
    let d = start.len();
    let mut theta = start;
    let (mut l, mut grad, j) = obj.parts(&theta)?;
    let mut hinv = initial_inverse(&j);
    let mut reset = false;
    for _ in 0..MAX_ITER {
        let pg = projected(&grad, &theta, bounds);
        if pg.norm() < 1e-8 * (1.0 + l.abs()) {
            return Some((theta, l, true));
        }
        let mut dir = &hinv * &pg;
        for k in 0..d {
            if pg[k] == 0.0 {
                dir[k] = 0.0;
            }
        }
        if dir.dot(&pg) <= 0.0 {
            dir = pg.clone();
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, p)| t + alpha * p).collect();
            clamp_box(&mut trial, bounds);
            let step: f64 = trial.iter().zip(&theta).zip(grad.iter()).map(|((a, b), g)| (a - b) * g).sum();
            if let Some(lt) = obj.value(&trial) {
                if lt >= l + ARMIJO * step && trial != theta {
                    accepted = Some((trial, lt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, _)) = accepted else {
            if reset {
                return Some((theta, l, false));
            }
            reset = true;
            hinv = DMatrix::identity(d, d) * (1.0 / (1.0 + grad.norm()));
            continue;
        };
        let (lt, gt, _) = obj.parts(&trial)?;
        let s = DVector::from_iterator(d, trial.iter().zip(&theta).map(|(a, b)| a - b));
        // curvature pair for minimizing -ℓ
        let y = &grad - &gt;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(d, d);
            let left = &id - rho * &s * y.transpose();
            let right = &id - rho * &y * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        }
        theta = trial;
        l = lt;
        grad = gt;
    }
    let pg = projected(&grad, &theta, bounds);
    let converged = pg.norm() < 1e-8 * (1.0 + l.abs());
    Some((theta, l, converged))
}

/// Maximize `ℓ` over the closed parameter box: coarse cell-centred grid
/// (32 nodes per axis for `d ≤ 2`, 11 otherwise), then projected BFGS from
/// the best three nodes.
pub fn mle_fit(model: &dyn DiffusionModel, path: &Path) -> Result<MleResult> {
    let d = model.dim();
    let bounds = model.theta_box().to_vec();
    let k = grid_points(d);
    let mut obj = Objective { model, path, evals: 0 };

    let total = k.pow(d as u32);
    let mut nodes: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut theta = vec![0.0; d];
    for idx in 0..total {
        let mut r = idx;
        for (c, &(lo, hi)) in bounds.iter().enumerate() {
            let i = r % k;
            r /= k;
            theta[c] = lo + (i as f64 + 0.5) * (hi - lo) / k as f64;
        }
        if let Some(l) = obj.value(&theta) {
            nodes.push((l, theta.clone()));
        }
    }
    if nodes.is_empty() {
        return Err(Error::Fit(format!(
            "log-likelihood is not finite at any of the {total} grid nodes"
        )));
    }
    nodes.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for (l0, start) in nodes.into_iter().take(STARTS) {
        let cand = refine(&mut obj, start.clone(), &bounds).unwrap_or((start, l0, false));
        if best.as_ref().is_none_or(|b| cand.1 > b.1) {
            best = Some(cand);
        }
    }
    let (theta_hat, loglik, converged) = best.unwrap();
    let boundary_hit = theta_hat
        .iter()
        .zip(&bounds)
        .any(|(t, &(lo, hi))| (t - lo).abs() < BOUNDARY_TOL || (hi - t).abs() < BOUNDARY_TOL);
    Ok(MleResult {
        theta_hat,
        loglik,
        n_evals: obj.evals,
        converged,
        boundary_hit,
    })
}
