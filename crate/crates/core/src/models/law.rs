//! Invariant density `f = exp{2∫₀ˣ S/σ²} / (G σ²)` on a truncated uniform grid.
//!
//! Work is done in log space: `φ(x) = 2∫ S/σ² - 2 ln σ(x)` is accumulated by
//! the trapezoid rule, the support is doubled on each side until `φ` has
//! fallen `TAIL_DROP` below its maximum at both edges, and the final grid is
//! the sub-interval where `φ` stays within that drop. The discarded mass is
//! below `e^{-TAIL_DROP}` times the support width.

use super::{check_theta, DiffusionModel};
use crate::quad::UniformGrid;
use crate::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 4000;
pub const DEFAULT_NU_CLIP: f64 = 1e-4;

const TAIL_DROP: f64 = 40.0;
const AUX_POINTS: usize = 2001;
const MAX_EXTENSIONS: usize = 30;

/// Tabulated invariant law for one parameter value.
#[derive(Debug, Clone)]
pub struct InvariantLaw {
    theta: Vec<f64>,
    log_normalizer: f64,
    grid: UniformGrid,
    density: Vec<f64>,
    cdf: Vec<f64>,
    nu_clip: f64,
}

/// `φ` on `grid`, anchored so that `φ(x_lo) = -2 ln σ(x_lo)`.
fn log_integrand(model: &dyn DiffusionModel, theta: &[f64], grid: &UniformGrid) -> Result<Vec<f64>> {
    let n = grid.len();
    let mut ratio = Vec::with_capacity(n);
    let mut log_sig = Vec::with_capacity(n);
    for j in 0..n {
        let x = grid.node(j);
        let s = model.drift(theta, x);
        let sig = model.sigma(x);
        if !s.is_finite() || !sig.is_finite() || sig <= 0.0 {
            return Err(Error::Evaluation {
                x,
                what: format!("invariant density integrand undefined (S = {s}, σ = {sig})"),
            });
        }
        ratio.push(s / (sig * sig));
        log_sig.push(sig.ln());
    }
    let h = grid.step();
    let mut phi = Vec::with_capacity(n);
    let mut acc = 0.0;
    phi.push(-2.0 * log_sig[0]);
    for j in 1..n {
        acc += h * (ratio[j - 1] + ratio[j]);
        phi.push(acc - 2.0 * log_sig[j]);
    }
    if let Some(j) = phi.iter().position(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            x: grid.node(j),
            what: "log invariant density is not finite".into(),
        });
    }
    Ok(phi)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `2∫₀^a S/σ² dy`.
fn anchor_offset(model: &dyn DiffusionModel, theta: &[f64], a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let g = UniformGrid::new(a.min(0.0), a.max(0.0), AUX_POINTS);
    let vals: Vec<f64> = (0..g.len())
        .map(|j| {
            let x = g.node(j);
            let s = model.sigma(x);
            model.drift(theta, x) / (s * s)
        })
        .collect();
    let integral: f64 = vals.windows(2).map(|w| 0.5 * g.step() * (w[0] + w[1])).sum();
    2.0 * integral * a.signum()
}

pub fn build_invariant_law(
    model: &dyn DiffusionModel,
    theta: &[f64],
    grid_size: usize,
    nu_clip: f64,
) -> Result<InvariantLaw> {
    check_theta(model, theta)?;
    if grid_size < 100 {
        return Err(Error::Invalid(format!("grid_size must be at least 100, got {grid_size}")));
    }
    if !(nu_clip > 0.0 && nu_clip <= 1e-3) {
        return Err(Error::Invalid(format!("nu_clip must lie in (0, 1e-3], got {nu_clip}")));
    }

    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut support = None;
    for _ in 0..MAX_EXTENSIONS {
        let aux = UniformGrid::new(lo, hi, AUX_POINTS);
        let phi = log_integrand(model, theta, &aux)?;
        let floor = max_of(&phi) - TAIL_DROP;
        let left_ok = phi[0] < floor;
        let right_ok = phi[AUX_POINTS - 1] < floor;
        if left_ok && right_ok {
            let first = phi.iter().position(|&v| v >= floor).unwrap();
            let last = phi.iter().rposition(|&v| v >= floor).unwrap();
            support = Some((aux.node(first.saturating_sub(1)), aux.node((last + 1).min(AUX_POINTS - 1))));
            break;
        }
        if !left_ok {
            lo *= 2.0;
        }
        if !right_ok {
            hi *= 2.0;
        }
    }
    let (a, b) = support.ok_or_else(|| {
        Error::Ergodicity(format!(
            "normalizer G diverges for model `{}` at theta {theta:?}: tail mass not decreasing on [{lo:e}, {hi:e}]",
            model.name()
        ))
    })?;

    let grid = UniformGrid::new(a, b, grid_size);
    let phi = log_integrand(model, theta, &grid)?;
    let peak = max_of(&phi);
    let u: Vec<f64> = phi.iter().map(|&p| (p - peak).exp()).collect();
    let h = grid.step();
    let mut cum = Vec::with_capacity(grid_size);
    cum.push(0.0);
    for j in 1..grid_size {
        cum.push(cum[j - 1] + 0.5 * h * (u[j - 1] + u[j]));
    }
    let z = cum[grid_size - 1];
    let density: Vec<f64> = u.iter().map(|v| v / z).collect();
    let cdf: Vec<f64> = cum.iter().map(|c| c / z).collect();
    let log_normalizer = peak + z.ln() + anchor_offset(model, theta, a);

    Ok(InvariantLaw {
        theta: theta.to_vec(),
        log_normalizer,
        grid,
        density,
        cdf,
        nu_clip,
    })
}

impl InvariantLaw {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `G(θ) = ∫ exp{2∫₀ˣ S/σ²} / σ² dx`.
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn nu_clip(&self) -> f64 {
        self.nu_clip
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn x_lo(&self) -> f64 {
        self.grid.lo()
    }

    pub fn x_hi(&self) -> f64 {
        self.grid.hi()
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    pub fn density_nodes(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf_nodes(&self) -> &[f64] {
        &self.cdf
    }

    /// Linear interpolation of `f`; zero outside the grid.
    pub fn density_at(&self, x: f64) -> f64 {
        if !self.grid.contains(x) {
            return 0.0;
        }
        let (j, w) = self.grid.locate(x);
        self.density[j] + w * (self.density[j + 1] - self.density[j])
    }

    /// Linear interpolation of `F`; 0 left of the grid and 1 right of it.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.grid.lo() {
            return 0.0;
        }
        if x >= self.grid.hi() {
            return 1.0;
        }
        let (j, w) = self.grid.locate(x);
        self.cdf[j] + w * (self.cdf[j + 1] - self.cdf[j])
    }

    /// `F⁻¹(s)` for `s ∈ [nu_clip, 1 - nu_clip]`.
    pub fn quantile_at(&self, s: f64) -> Result<f64> {
        let (lo, hi) = (self.nu_clip, 1.0 - self.nu_clip);
        if !(s >= lo && s <= hi) {
            return Err(Error::Domain { value: s, lo, hi });
        }
        Ok(self.quantile_clamped(s))
    }

    /// Inverse of the piecewise-linear `F`, clamped to the grid.
    pub fn quantile_clamped(&self, s: f64) -> f64 {
        let n = self.cdf.len();
        let j = self.cdf.partition_point(|&c| c < s);
        if j == 0 {
            return self.grid.lo();
        }
        if j >= n {
            return self.grid.hi();
        }
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let (x0, x1) = (self.grid.node(j - 1), self.grid.node(j));
        if c1 <= c0 {
            return x1;
        }
        x0 + (s - c0) / (c1 - c0) * (x1 - x0)
    }

    /// `(F⁻¹(ν), F⁻¹(1-ν))` for a clipping level `ν` no smaller than the law's.
    pub fn clipped_bounds(&self, nu: f64) -> Result<(f64, f64)> {
        Ok((self.quantile_at(nu)?, self.quantile_at(1.0 - nu)?))
    }
}
