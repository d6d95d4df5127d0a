//! Parametric diffusion models and their invariant laws.
//!
//! A model supplies the drift `S(θ,x)`, its parameter gradient `Ṡ(θ,x)`, the
//! mixed derivative `Ṡ'(θ,x) = ∂Ṡ/∂x`, and a known diffusion coefficient
//! `σ(x) > 0` together with `σ'(x)`. The parameter set is an open box.

mod builtin;
mod law;

use std::fmt;

pub use builtin::{builtin, AffineDrift, ScaledSigma, TwoParamOu, BUILTIN_NAMES};
pub use law::{build_invariant_law, InvariantLaw, DEFAULT_GRID_SIZE, DEFAULT_NU_CLIP};

use crate::{Error, Result};

/// Largest supported parameter dimension.
pub const MAX_DIM: usize = 4;

/// Scalar diffusion `dX = S(θ,X) dt + σ(X) dW` with `θ ∈ Θ ⊂ R^d`.
pub trait DiffusionModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Bounds `(lo, hi)` of the open parameter box, one pair per coordinate.
    fn theta_box(&self) -> &[(f64, f64)];

    fn drift(&self, theta: &[f64], x: f64) -> f64;

    /// `∂S/∂θ` written into `out` (length `dim`).
    fn drift_grad(&self, theta: &[f64], x: f64, out: &mut [f64]);

    /// `∂²S/∂θ∂x` written into `out` (length `dim`).
    fn drift_grad_x(&self, theta: &[f64], x: f64, out: &mut [f64]);

    fn sigma(&self, x: f64) -> f64;

    fn sigma_x(&self, x: f64) -> f64;

    /// True when `S(θ,x) = b(x) + θ a(x)` with `d = 1`.
    fn is_linear_in_theta(&self) -> bool {
        false
    }
}

/// Verify that `theta` has the model's dimension and lies in the closed box.
pub fn check_theta(model: &dyn DiffusionModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::Invalid(format!(
            "model `{}` expects {} parameter(s), got {}",
            model.name(),
            model.dim(),
            theta.len()
        )));
    }
    if model.dim() > MAX_DIM {
        return Err(Error::Invalid(format!(
            "parameter dimension {} exceeds supported maximum {MAX_DIM}",
            model.dim()
        )));
    }
    for (&t, &(lo, hi)) in theta.iter().zip(model.theta_box()) {
        if !(t >= lo && t <= hi) {
            return Err(Error::Domain { value: t, lo, hi });
        }
    }
    Ok(())
}

/// One evaluation of `sgn(y) S(θ,y)/σ(y)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub y: f64,
    pub value: f64,
}

/// Outcome of [`check_ergodicity`].
///
/// The check is necessary, not sufficient: only finitely many points are
/// probed, so a pass does not prove the limsup condition at infinity.
#[derive(Debug, Clone)]
pub struct ErgodicityReport {
    pub probes: Vec<Probe>,
    /// Probe points where `sgn(y) S/σ² >= 0`.
    pub violations: Vec<f64>,
}

impl ErgodicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Probe the drift sign condition on `|y| ∈ [r, 2r]`.
pub fn check_ergodicity(
    model: &dyn DiffusionModel,
    theta: &[f64],
    probe_radius: f64,
) -> Result<ErgodicityReport> {
    check_theta(model, theta)?;
    if !(probe_radius > 0.0 && probe_radius.is_finite()) {
        return Err(Error::Invalid(format!("probe radius must be positive, got {probe_radius}")));
    }
    let mut probes = Vec::with_capacity(10);
    let mut violations = Vec::new();
    for k in 0..5 {
        let r = probe_radius * (1.0 + 0.25 * k as f64);
        for y in [r, -r] {
            let s = model.drift(theta, y);
            let sig = model.sigma(y);
            if !s.is_finite() || !sig.is_finite() {
                return Err(Error::Evaluation {
                    x: y,
                    what: format!("non-finite coefficient (S = {s}, σ = {sig})"),
                });
            }
            if sig <= 0.0 {
                return Err(Error::Evaluation {
                    x: y,
                    what: format!("diffusion coefficient must be positive, got {sig}"),
                });
            }
            let value = y.signum() * s / (sig * sig);
            if value >= 0.0 {
                violations.push(y);
            }
            probes.push(Probe { y, value });
        }
    }
    Ok(ErgodicityReport { probes, violations })
}

/// Largest discrepancies between the analytic derivatives of a model and
/// central finite differences.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeCheck {
    /// `max |Ṡ - (S(θ+h e_k) - S(θ-h e_k))/2h|`
    pub grad: f64,
    /// `max |Ṡ' - (Ṡ(x+h) - Ṡ(x-h))/2h|`
    pub grad_x: f64,
    /// `max |σ' - (σ(x+h) - σ(x-h))/2h|`
    pub sigma_x: f64,
}

pub fn check_derivatives(model: &dyn DiffusionModel, theta: &[f64], xs: &[f64], h: f64) -> DerivativeCheck {
    let d = model.dim();
    let mut g = vec![0.0; d];
    let mut gx = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut tp = theta.to_vec();
    let mut tm = theta.to_vec();
    let mut out = DerivativeCheck { grad: 0.0, grad_x: 0.0, sigma_x: 0.0 };
    for &x in xs {
        model.drift_grad(theta, x, &mut g);
        model.drift_grad_x(theta, x, &mut gx);
        for k in 0..d {
            tp.copy_from_slice(theta);
            tm.copy_from_slice(theta);
            tp[k] += h;
            tm[k] -= h;
            let fd = (model.drift(&tp, x) - model.drift(&tm, x)) / (2.0 * h);
            out.grad = out.grad.max((g[k] - fd).abs());
        }
        model.drift_grad(theta, x + h, &mut gp);
        model.drift_grad(theta, x - h, &mut gm);
        for k in 0..d {
            let fd = (gp[k] - gm[k]) / (2.0 * h);
            out.grad_x = out.grad_x.max((gx[k] - fd).abs());
        }
        let fd = (model.sigma(x + h) - model.sigma(x - h)) / (2.0 * h);
        out.sigma_x = out.sigma_x.max((model.sigma_x(x) - fd).abs());
    }
    out
}
