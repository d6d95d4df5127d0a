//! Fisher information, tail information and the normalized score kernel.
//!
//! With `g = Ṡ/σ`, everything is built from two tables on the law grid:
//! the upper tail `Ñ(y) = ∫_y^{x_hi} g g* f dz` and the lower integral
//! `∫_{x_lo}^y g f dz`. Then `I = Ñ(x_lo)`, `N(y) = I⁻¹Ñ(y)`, and the
//! symmetric form `𝒩(t) = I^{-1/2} Ñ(F⁻¹(t)) I^{-1/2} = ∫_t^1 h h* ds`
//! with `h(s) = I^{-1/2} g(F⁻¹(s))`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{from_flat, inv_sqrt_spd, inverse_spd, min_eigenvalue};
use crate::models::{DiffusionModel, InvariantLaw};
use crate::quad::{Accumulate, CumulativeTable, Table};
use crate::{Error, Result};

/// Smallest admissible eigenvalue of `I`.
pub const FISHER_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of `𝒩(t)` wherever it must be inverted.
pub const SCRIPT_N_TOL: f64 = 1e-8;

/// `𝒩(t)` together with its smallest eigenvalue.
#[derive(Debug, Clone)]
pub struct ScriptN {
    pub matrix: DMatrix<f64>,
    pub min_eig: f64,
}

impl ScriptN {
    pub fn is_degenerate(&self) -> bool {
        !(self.min_eig >= SCRIPT_N_TOL)
    }
}

/// Information quantities for one parameter value.
#[derive(Debug, Clone)]
pub struct InformationSet {
    model: Arc<dyn DiffusionModel>,
    law: Arc<InvariantLaw>,
    dim: usize,
    fisher: DMatrix<f64>,
    fisher_inv: DMatrix<f64>,
    fisher_inv_sqrt: DMatrix<f64>,
    tail: CumulativeTable,
    lower_gf: CumulativeTable,
}

fn g_into(model: &dyn DiffusionModel, theta: &[f64], x: f64, out: &mut [f64]) {
    model.drift_grad(theta, x, out);
    let s = model.sigma(x);
    for v in out.iter_mut() {
        *v /= s;
    }
}

impl InformationSet {
    pub fn new(model: Arc<dyn DiffusionModel>, law: Arc<InvariantLaw>) -> Result<Self> {
        let d = model.dim();
        let theta = law.theta().to_vec();
        if theta.len() != d {
            return Err(Error::Invalid("law was built for a different model".into()));
        }
        let grid = *law.grid();
        let f = law.density_nodes();
        let mut outer = vec![0.0; grid.len() * d * d];
        let mut gf = vec![0.0; grid.len() * d];
        let mut g = vec![0.0; d];
        for (j, &fj) in f.iter().enumerate() {
            let x = grid.node(j);
            g_into(model.as_ref(), &theta, x, &mut g);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation {
                    x,
                    what: "score kernel Ṡ/σ is not finite".into(),
                });
            }
            for a in 0..d {
                gf[j * d + a] = g[a] * fj;
                for b in 0..d {
                    outer[(j * d + a) * d + b] = g[a] * g[b] * fj;
                }
            }
        }
        let outer = Table::new(grid, d * d, outer);
        let gf = Table::new(grid, d, gf);
        let tail = CumulativeTable::new(outer, Accumulate::FromRight);
        let lower_gf = CumulativeTable::new(gf, Accumulate::FromLeft);
        let fisher = from_flat(d, tail.total());
        let lmin = min_eigenvalue(&fisher);
        if !(lmin > FISHER_TOL) {
            return Err(Error::Nondegenerate(format!(
                "Fisher information is singular (min eigenvalue {lmin:e}); the model is not uniformly nondegenerate at theta {theta:?}"
            )));
        }
        let fisher_inv = inverse_spd(&fisher, FISHER_TOL)?;
        let fisher_inv_sqrt = inv_sqrt_spd(&fisher, FISHER_TOL)?;
        Ok(InformationSet {
            model,
            law,
            dim: d,
            fisher,
            fisher_inv,
            fisher_inv_sqrt,
            tail,
            lower_gf,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> &[f64] {
        self.law.theta()
    }

    pub fn model(&self) -> &Arc<dyn DiffusionModel> {
        &self.model
    }

    pub fn law(&self) -> &Arc<InvariantLaw> {
        &self.law
    }

    /// `I(θ) = ∫ Ṡ Ṡ*/σ² f dx`.
    pub fn fisher(&self) -> &DMatrix<f64> {
        &self.fisher
    }

    pub fn fisher_inv(&self) -> &DMatrix<f64> {
        &self.fisher_inv
    }

    pub fn fisher_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.fisher_inv_sqrt
    }

    /// `g(y) = Ṡ(θ,y)/σ(y)`.
    pub fn g_at(&self, y: f64, out: &mut [f64]) {
        g_into(self.model.as_ref(), self.law.theta(), y, out);
    }

    /// Unnormalized tail `Ñ(y) = ∫_y^{x_hi} g g* f dz`.
    pub fn tail_raw(&self, y: f64) -> DMatrix<f64> {
        let mut buf = vec![0.0; self.dim * self.dim];
        self.tail.at(y, &mut buf);
        from_flat(self.dim, &buf)
    }

    /// `∫_{x_lo}^y g f dz`.
    pub fn lower_gf(&self, y: f64, out: &mut [f64]) {
        self.lower_gf.at(y, out);
    }

    /// `N(θ,y) = I⁻¹ Ñ(y)`.
    pub fn tail_information(&self, y: f64) -> Result<DMatrix<f64>> {
        let (lo, hi) = (self.law.x_lo(), self.law.x_hi());
        if !(y >= lo && y <= hi) {
            return Err(Error::Domain { value: y, lo, hi });
        }
        Ok(&self.fisher_inv * self.tail_raw(y))
    }

    /// `I^{-1/2} Ñ(y) I^{-1/2}`, the symmetric form of `N` at a spatial point.
    pub fn script_n_at_x(&self, y: f64) -> ScriptN {
        let r = &self.fisher_inv_sqrt;
        let matrix = r * self.tail_raw(y) * r;
        let min_eig = min_eigenvalue(&matrix);
        ScriptN { matrix, min_eig }
    }

    /// `𝒩(t) = N(θ, F⁻¹(t))` in symmetric form.
    pub fn script_n(&self, t: f64) -> Result<ScriptN> {
        let x = self.law.quantile_at(t)?;
        Ok(self.script_n_at_x(x))
    }

    /// `𝒩(t)⁻¹`, refused when `λ_min(𝒩(t)) < SCRIPT_N_TOL`.
    pub fn script_n_inverse(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.script_n(t)?;
        invert_script_n(&n, t)
    }

    /// `h(s) = I^{-1/2} g(F⁻¹(s))`.
    pub fn h_kernel(&self, s: f64) -> Result<DVector<f64>> {
        let x = self.law.quantile_at(s)?;
        Ok(self.h_at_x(x))
    }

    /// `I^{-1/2} g(x)`.
    pub fn h_at_x(&self, x: f64) -> DVector<f64> {
        let mut g = vec![0.0; self.dim];
        self.g_at(x, &mut g);
        &self.fisher_inv_sqrt * DVector::from_vec(g)
    }

    /// Smallest eigenvalue of `𝒩(t)` over 64 probes of `t ∈ [ν, 1-ν]`.
    pub fn min_eig_script_n(&self, nu: f64) -> Result<f64> {
        let mut out = f64::INFINITY;
        for k in 0..64 {
            let t = nu + (1.0 - 2.0 * nu) * k as f64 / 63.0;
            out = out.min(self.script_n(t)?.min_eig);
        }
        Ok(out)
    }
}

pub(crate) fn invert_script_n(n: &ScriptN, t: f64) -> Result<DMatrix<f64>> {
    if n.is_degenerate() {
        return Err(Error::Nondegenerate(format!(
            "tail information 𝒩(t) is singular at t = {t} (min eigenvalue {:e})",
            n.min_eig
        )));
    }
    inverse_spd(&n.matrix, SCRIPT_N_TOL)
}

/// `I(θ)` for the model at the law's parameter.
pub fn fisher_information(model: Arc<dyn DiffusionModel>, law: Arc<InvariantLaw>) -> Result<DMatrix<f64>> {
    Ok(InformationSet::new(model, law)?.fisher)
}
