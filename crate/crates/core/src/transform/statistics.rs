//! Path statistics `ξ_T`, `V_T`, `B_T` and the Cramér–von Mises functional.
//!
//! For `y < x` the projection weight is written `Q(x,y) = Φ(x)(K̃(x) - K̃(y))`
//! with `∂Q/∂y = -Φ(x) κ(y)`, `K̃ = ∫ κ`:
//!
//! * inner reading: `Φ = I_d`, `κ = Ñ⁻¹ g f`,
//! * displayed reading: `Φ(x) = Ñ(x)⁻¹`, `κ = g f`,
//!
//! where `g = Ṡ/σ` and `Ñ(y) = ∫_y g g* f`. Every path sum over
//! `1{X_i < x}` is then a prefix sum over the sorted path, so a whole curve
//! costs one sort plus one sweep.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kernel::Reading;
use crate::information::{invert_script_n, InformationSet};
use crate::models::{DiffusionModel, InvariantLaw};
use crate::quad::{Accumulate, CumulativeTable, Table};
use crate::simulate::Path;
use crate::{Error, Result};

/// Default clipping level `ν` for statistics.
pub const DEFAULT_NU: f64 = 1e-3;

/// Which statistic a curve holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Xi,
    VTheorem,
    VCorrected,
    BLinear,
    Simple,
}

/// Test statistic used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `V_T` without the boundary term.
    #[default]
    Theorem,
    /// `V_T` with `(1/√T)∫_{X₀}^{X_T} R dy` added.
    Corrected,
    /// `B_T`, drift linear in a scalar parameter.
    Linear,
    /// `ξ_T` at a known parameter, no fitting.
    Simple,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(Variant::Theorem),
            "corrected" => Ok(Variant::Corrected),
            "linear" => Ok(Variant::Linear),
            "simple" => Ok(Variant::Simple),
            _ => Err(Error::Invalid(format!(
                "unknown variant `{s}` (theorem|corrected|linear|simple)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Theorem => "theorem",
            Variant::Corrected => "corrected",
            Variant::Linear => "linear",
            Variant::Simple => "simple",
        })
    }
}

/// A statistic evaluated on a clipped spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticCurve {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: CurveKind,
}

impl StatisticCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.x.iter().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }

    pub fn sup_distance(&self, other: &StatisticCurve) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Law-grid nodes strictly inside `(F⁻¹(ν), F⁻¹(1-ν))` plus both endpoints.
pub fn clipped_grid(law: &InvariantLaw, nu: f64) -> Result<Vec<f64>> {
    let (a, b) = law.clipped_bounds(nu)?;
    let mut out = vec![a];
    out.extend(law.x_nodes().into_iter().filter(|&x| x > a && x < b));
    out.push(b);
    Ok(out)
}

/// `δ = ∫ V(x)² f(x) dx` by the trapezoid rule on the curve's grid.
pub fn delta_statistic(curve: &StatisticCurve, law: &InvariantLaw) -> f64 {
    let y: Vec<f64> = curve
        .x
        .iter()
        .zip(&curve.values)
        .map(|(&x, &v)| v * v * law.density_at(x))
        .collect();
    crate::quad::trapezoid(&curve.x, &y)
}

/// Per-observation residual `(ΔX_i - S(θ,X_i)Δ)/σ(X_i)` and the sort order.
struct Innovations {
    order: Vec<usize>,
    resid: Vec<f64>,
}

fn innovations(model: &dyn DiffusionModel, path: &Path, theta: &[f64]) -> Innovations {
    let v = path.values();
    let n = path.n_steps();
    let dt = path.dt();
    let resid = (0..n)
        .map(|i| (v[i + 1] - v[i] - model.drift(theta, v[i]) * dt) / model.sigma(v[i]))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    Innovations { order, resid }
}

/// `ξ_T(θ,x) = (1/√T) Σ_i 1{X_i < x} (ΔX_i - S(θ,X_i)Δ)/σ(X_i)`.
pub fn xi_statistic(model: &dyn DiffusionModel, path: &Path, theta: &[f64], x_grid: &[f64]) -> StatisticCurve {
    let inn = innovations(model, path, theta);
    let v = path.values();
    let scale = 1.0 / path.horizon().sqrt();
    let mut k = 0;
    let mut acc = 0.0;
    let values = x_grid
        .iter()
        .map(|&x| {
            while k < inn.order.len() && v[inn.order[k]] < x {
                acc += inn.resid[inn.order[k]];
                k += 1;
            }
            acc * scale
        })
        .collect();
    StatisticCurve {
        x: x_grid.to_vec(),
        values,
        kind: CurveKind::Xi,
    }
}

/// `δ̃_T = ∫ ξ_T(θ₀,x)² dF(θ₀,x)` for a known parameter.
pub fn simple_delta(
    model: &dyn DiffusionModel,
    path: &Path,
    theta0: &[f64],
    law0: &InvariantLaw,
    nu: f64,
) -> Result<(StatisticCurve, f64)> {
    let grid = clipped_grid(law0, nu)?;
    let mut curve = xi_statistic(model, path, theta0, &grid);
    curve.kind = CurveKind::Simple;
    let d = delta_statistic(&curve, law0);
    Ok((curve, d))
}

/// Spatial tables for `Q`, `R`, `R_y` and the boundary term at one `θ̂`.
#[derive(Debug, Clone)]
pub struct StatisticTables {
    info: Arc<InformationSet>,
    reading: Reading,
    nu: f64,
    x_grid: Vec<f64>,
    /// Largest abscissa where `Φ` and `κ` are defined.
    valid_hi: f64,
    ktil: CumulativeTable,
    phi_grid: Vec<DMatrix<f64>>,
    p_table: CumulativeTable,
    m_table: CumulativeTable,
}

fn alpha_beta(model: &dyn DiffusionModel, theta: &[f64], y: f64, alpha: &mut [f64], beta: &mut [f64]) {
    let s = model.sigma(y);
    let sx = model.sigma_x(y);
    model.drift_grad(theta, y, alpha);
    model.drift_grad_x(theta, y, beta);
    let s2 = s * s;
    for k in 0..alpha.len() {
        beta[k] = beta[k] / s2 - 2.0 * sx * alpha[k] / (s2 * s);
        alpha[k] /= s2;
    }
}

impl StatisticTables {
    pub fn new(info: Arc<InformationSet>, nu: f64, reading: Reading) -> Result<Self> {
        let law = info.law().clone();
        let model = info.model().clone();
        let theta = info.theta().to_vec();
        let d = info.dim();
        let grid = *law.grid();
        let n = grid.len();
        let f = law.density_nodes();
        let x_grid = clipped_grid(&law, nu)?;
        let clip_hi = *x_grid.last().unwrap();

        // κ on the law grid, up to the first node at or beyond the clip
        let mut kappa = vec![0.0; n * d];
        let mut g = vec![0.0; d];
        let mut valid_hi = grid.lo();
        let mut last_valid = 0;
        for j in 0..n {
            let x = grid.node(j);
            info.g_at(x, &mut g);
            let row = &mut kappa[j * d..(j + 1) * d];
            match reading {
                Reading::Displayed => {
                    for k in 0..d {
                        row[k] = g[k] * f[j];
                    }
                    valid_hi = x;
                }
                Reading::Inner => {
                    let sn = info.script_n_at_x(x);
                    if sn.is_degenerate() {
                        if x <= clip_hi {
                            invert_script_n(&sn, law.cdf_at(x))?;
                        }
                        break;
                    }
                    let inv = info.tail_raw(x).try_inverse().ok_or_else(|| {
                        Error::Nondegenerate(format!("tail information singular at x = {x}"))
                    })?;
                    let kv = inv * nalgebra::DVector::from_column_slice(&g) * f[j];
                    row.copy_from_slice(kv.as_slice());
                    valid_hi = x;
                }
            }
            last_valid = j;
        }
        // hold the last valid κ beyond `valid_hi`; never read there
        for j in last_valid + 1..n {
            let (head, tail) = kappa.split_at_mut(j * d);
            tail[..d].copy_from_slice(&head[last_valid * d..(last_valid + 1) * d]);
        }
        if valid_hi < clip_hi {
            return Err(Error::Nondegenerate(format!(
                "tail information degenerates at x = {valid_hi} inside the clipped range"
            )));
        }
        let ktil = CumulativeTable::new(Table::new(grid, d, kappa), Accumulate::FromLeft);

        let mut phi_grid = Vec::with_capacity(x_grid.len());
        if reading == Reading::Displayed {
            for &x in &x_grid {
                let sn = info.script_n_at_x(x);
                invert_script_n(&sn, law.cdf_at(x))?;
                phi_grid.push(info.tail_raw(x).try_inverse().ok_or_else(|| {
                    Error::Nondegenerate(format!("tail information singular at x = {x}"))
                })?);
            }
        }

        // P = ∫ α, M = ∫ α K̃*
        let mut alpha = vec![0.0; d];
        let mut beta = vec![0.0; d];
        let mut kt = vec![0.0; d];
        let mut pa = vec![0.0; n * d];
        let mut ma = vec![0.0; n * d * d];
        for j in 0..n {
            let x = grid.node(j);
            alpha_beta(model.as_ref(), &theta, x, &mut alpha, &mut beta);
            ktil.at(x, &mut kt);
            for a in 0..d {
                pa[j * d + a] = alpha[a];
                for b in 0..d {
                    ma[(j * d + a) * d + b] = alpha[a] * kt[b];
                }
            }
        }
        let p_table = CumulativeTable::new(Table::new(grid, d, pa), Accumulate::FromLeft);
        let m_table = CumulativeTable::new(Table::new(grid, d * d, ma), Accumulate::FromLeft);

        Ok(StatisticTables {
            info,
            reading,
            nu,
            x_grid,
            valid_hi,
            ktil,
            phi_grid,
            p_table,
            m_table,
        })
    }

    pub fn info(&self) -> &Arc<InformationSet> {
        &self.info
    }

    pub fn reading(&self) -> Reading {
        self.reading
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    fn dim(&self) -> usize {
        self.info.dim()
    }

    /// `K̃(y)`, zero below the law grid.
    fn ktil_at(&self, y: f64, out: &mut [f64]) {
        if y <= self.info.law().x_lo() {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.ktil.at(y, out);
        }
    }

    /// `κ(y)`, zero outside the law grid.
    fn kappa_at(&self, y: f64, out: &mut [f64]) {
        let law = self.info.law();
        if y < law.x_lo() || y > law.x_hi() {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.ktil.integrand().interp(y, out);
        }
    }

    fn phi_at(&self, x: f64) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let sn = self.info.script_n_at_x(x);
        if sn.is_degenerate() || x > self.valid_hi {
            return Err(Error::Nondegenerate(format!(
                "tail information singular at x = {x} (min eigenvalue {:e}); x lies outside the clipped range",
                sn.min_eig
            )));
        }
        Ok(match self.reading {
            Reading::Inner => DMatrix::identity(d, d),
            Reading::Displayed => self
                .info
                .tail_raw(x)
                .try_inverse()
                .ok_or_else(|| Error::Nondegenerate(format!("tail information singular at x = {x}")))?,
        })
    }

    /// `P(y) = ∫_{x_lo}^y α`, with the part below the grid integrated directly.
    fn p_at(&self, y: f64, out: &mut [f64]) {
        let law = self.info.law();
        let lo = law.x_lo();
        if y >= lo {
            self.p_table.at(y, out);
            return;
        }
        // Simpson on [y, x_lo], negated
        let d = self.dim();
        let model = self.info.model();
        let theta = self.info.theta();
        let m = 64;
        let h = (lo - y) / m as f64;
        let mut alpha = vec![0.0; d];
        let mut beta = vec![0.0; d];
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..=m {
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            alpha_beta(model.as_ref(), theta, y + k as f64 * h, &mut alpha, &mut beta);
            for a in 0..d {
                out[a] -= w * h / 3.0 * alpha[a];
            }
        }
    }

    /// `M(y) = ∫_{x_lo}^y α K̃*`, zero below the grid where `K̃ = 0`.
    fn m_at(&self, y: f64, out: &mut [f64]) {
        if y <= self.info.law().x_lo() {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.m_table.at(y, out);
        }
    }

    /// `∫_{-∞}^{min(y,x)} R(x,v) dv` up to an `x`-dependent constant.
    fn r_antiderivative(&self, x: f64, y: f64, phi: &DMatrix<f64>, kx: &[f64]) -> f64 {
        let d = self.dim();
        let m = y.min(x);
        let mut p = vec![0.0; d];
        let mut mm = vec![0.0; d * d];
        self.p_at(m, &mut p);
        self.m_at(m, &mut mm);
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                s += phi[(a, b)] * (p[a] * kx[b] - mm[a * d + b]);
            }
        }
        s
    }
}

/// `Q(x,y)`, `R(x,y)` and `∂R/∂y` at one pair of points.
#[derive(Debug, Clone, PartialEq)]
pub struct QrValues {
    pub q: Vec<f64>,
    pub r: f64,
    pub r_y: f64,
}

pub fn qr_functions(tables: &StatisticTables, x: f64, y: f64) -> Result<QrValues> {
    let d = tables.dim();
    let info = tables.info();
    let model = info.model();
    let theta = info.theta();
    let phi = tables.phi_at(x)?;
    let mut alpha = vec![0.0; d];
    let mut beta = vec![0.0; d];
    alpha_beta(model.as_ref(), theta, y, &mut alpha, &mut beta);
    if y >= x {
        return Ok(QrValues {
            q: vec![0.0; d],
            r: 0.0,
            r_y: 0.0,
        });
    }
    let mut kx = vec![0.0; d];
    let mut ky = vec![0.0; d];
    let mut kap = vec![0.0; d];
    tables.ktil_at(x, &mut kx);
    tables.ktil_at(y, &mut ky);
    tables.kappa_at(y, &mut kap);
    let diff: Vec<f64> = kx.iter().zip(&ky).map(|(a, b)| a - b).collect();
    let q = (&phi * nalgebra::DVector::from_vec(diff)).as_slice().to_vec();
    let dq = -(&phi * nalgebra::DVector::from_vec(kap));
    let r: f64 = alpha.iter().zip(&q).map(|(a, b)| a * b).sum();
    let r_y = beta.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>()
        + alpha.iter().zip(dq.iter()).map(|(a, b)| a * b).sum::<f64>();
    Ok(QrValues { q, r, r_y })
}

/// `V_T(θ̂,x) = ξ_T(θ̂,x) - (1/2√T) Σ_i [R_y σ² + 2 R S](x, X_i) Δ`, plus
/// `(1/√T)∫_{X₀}^{X_T} R(x,y) dy` for [`Variant::Corrected`].
///
/// `model` supplies `S`, `Ṡ`, `Ṡ'`, `σ` along the path; the tables supply
/// `Q`. They normally describe the same model.
pub fn v_statistic(
    model: &dyn DiffusionModel,
    path: &Path,
    tables: &StatisticTables,
    variant: Variant,
) -> Result<StatisticCurve> {
    let kind = match variant {
        Variant::Theorem => CurveKind::VTheorem,
        Variant::Corrected => CurveKind::VCorrected,
        _ => return Err(Error::Invalid(format!("v_statistic does not compute variant `{variant}`"))),
    };
    let d = tables.dim();
    if model.dim() != d {
        return Err(Error::Invalid("model and tables differ in parameter dimension".into()));
    }
    let theta = tables.info().theta().to_vec();
    let v = path.values();
    let n = path.n_steps();
    let dt = path.dt();
    let inn = innovations(model, path, &theta);
    // the P and M tables hold the tables' own α
    let same_model = std::ptr::addr_eq(model as *const dyn DiffusionModel, Arc::as_ptr(tables.info().model()));

    // per-observation vectors c_i, K̃_i and matrices Δσ²α_i κ_i*
    let mut c = vec![0.0; n * d];
    let mut kt = vec![0.0; n * d];
    let mut ak = vec![0.0; n * d * d];
    let mut alpha = vec![0.0; d];
    let mut beta = vec![0.0; d];
    let mut kap = vec![0.0; d];
    for i in 0..n {
        let y = v[i];
        let s = model.drift(&theta, y);
        let sig = model.sigma(y);
        alpha_beta(model, &theta, y, &mut alpha, &mut beta);
        tables.ktil_at(y, &mut kt[i * d..(i + 1) * d]);
        tables.kappa_at(y, &mut kap);
        for a in 0..d {
            c[i * d + a] = (beta[a] * sig * sig + 2.0 * alpha[a] * s) * dt;
            for b in 0..d {
                ak[(i * d + a) * d + b] = dt * sig * sig * alpha[a] * kap[b];
            }
        }
    }

    let scale = 1.0 / path.horizon().sqrt();
    let mut c1 = vec![0.0; d];
    let mut c2 = vec![0.0; d * d];
    let mut c3 = vec![0.0; d * d];
    let mut xi = 0.0;
    let mut k = 0;
    let mut kx = vec![0.0; d];
    let mut values = Vec::with_capacity(tables.x_grid.len());
    for (gi, &x) in tables.x_grid.iter().enumerate() {
        while k < n && v[inn.order[k]] < x {
            let i = inn.order[k];
            xi += inn.resid[i];
            for a in 0..d {
                c1[a] += c[i * d + a];
                for b in 0..d {
                    c2[a * d + b] += c[i * d + a] * kt[i * d + b];
                    c3[a * d + b] += ak[(i * d + a) * d + b];
                }
            }
            k += 1;
        }
        tables.ktil_at(x, &mut kx);
        let phi = match tables.reading {
            Reading::Inner => None,
            Reading::Displayed => Some(&tables.phi_grid[gi]),
        };
        let mut corr = 0.0;
        for a in 0..d {
            for b in 0..d {
                let m = c1[a] * kx[b] - c2[a * d + b] - c3[a * d + b];
                corr += match phi {
                    None => {
                        if a == b {
                            m
                        } else {
                            0.0
                        }
                    }
                    Some(p) => p[(a, b)] * m,
                };
            }
        }
        let mut val = scale * (xi - 0.5 * corr);
        if variant == Variant::Corrected {
            let bt = if same_model {
                let id;
                let p = match phi {
                    Some(p) => p,
                    None => {
                        id = DMatrix::identity(d, d);
                        &id
                    }
                };
                tables.r_antiderivative(x, v[n], p, &kx) - tables.r_antiderivative(x, v[0], p, &kx)
            } else {
                boundary_simpson(model, tables, x, v[0], v[n])?
            };
            val += scale * bt;
        }
        values.push(val);
    }
    Ok(StatisticCurve {
        x: tables.x_grid.clone(),
        values,
        kind,
    })
}

/// `∫_a^b R(x,y) dy` with `α` taken from `model`, by composite Simpson.
fn boundary_simpson(model: &dyn DiffusionModel, tables: &StatisticTables, x: f64, a: f64, b: f64) -> Result<f64> {
    const M: usize = 400;
    let d = tables.dim();
    let theta = tables.info().theta();
    let h = (b - a) / M as f64;
    let mut alpha = vec![0.0; d];
    let mut beta = vec![0.0; d];
    let mut acc = 0.0;
    for k in 0..=M {
        let y = a + k as f64 * h;
        let w = if k == 0 || k == M {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        alpha_beta(model, theta, y, &mut alpha, &mut beta);
        let q = qr_functions(tables, x, y)?.q;
        acc += w * alpha.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(acc * h / 3.0)
}

/// Linear-case statistic `B_T(θ̂,x) = ξ_T(θ̂,x) + ∫^x κ(y) A_T(θ̂,y) dy` with
/// `A_T(y) = (1/√T) Σ_{X_i<y} Ṡ/σ² (ΔX_i - S Δ)` and `κ = Ñ⁻¹ g f`.
pub fn linear_b_statistic(model: &dyn DiffusionModel, path: &Path, tables: &StatisticTables) -> Result<StatisticCurve> {
    if !model.is_linear_in_theta() || model.dim() != 1 {
        return Err(Error::Invalid(format!(
            "B_T needs a drift linear in a scalar parameter; `{}` is not",
            model.name()
        )));
    }
    if tables.reading != Reading::Inner {
        return Err(Error::Invalid("B_T is defined with the inner tail weighting".into()));
    }
    let theta = tables.info().theta().to_vec();
    let v = path.values();
    let n = path.n_steps();
    let inn = innovations(model, path, &theta);
    let mut grad = [0.0];
    let mut kt = [0.0];
    // e_i = Ṡ/σ² (ΔX - SΔ) = (Ṡ/σ) · resid_i
    let e: Vec<f64> = (0..n)
        .map(|i| {
            model.drift_grad(&theta, v[i], &mut grad);
            grad[0] / model.sigma(v[i]) * inn.resid[i]
        })
        .collect();
    let scale = 1.0 / path.horizon().sqrt();
    let (mut xi, mut e1, mut e2) = (0.0, 0.0, 0.0);
    let mut k = 0;
    let mut values = Vec::with_capacity(tables.x_grid.len());
    for &x in &tables.x_grid {
        while k < n && v[inn.order[k]] < x {
            let i = inn.order[k];
            xi += inn.resid[i];
            e1 += e[i];
            tables.ktil_at(v[i], &mut kt);
            e2 += e[i] * kt[0];
            k += 1;
        }
        tables.ktil_at(x, &mut kt);
        values.push(scale * (xi + e1 * kt[0] - e2));
    }
    Ok(StatisticCurve {
        x: tables.x_grid.clone(),
        values,
        kind: CurveKind::BLinear,
    })
}

/// `A_T(θ,y)` over the whole path, i.e. `(1/√T)` times the score.
pub fn full_range_a(model: &dyn DiffusionModel, path: &Path, theta: &[f64]) -> f64 {
    let v = path.values();
    let mut g = [0.0];
    let mut acc = 0.0;
    for i in 0..path.n_steps() {
        let s = model.sigma(v[i]);
        model.drift_grad(theta, v[i], &mut g);
        acc += g[0] / (s * s) * (v[i + 1] - v[i] - model.drift(theta, v[i]) * path.dt());
    }
    acc / path.horizon().sqrt()
}
