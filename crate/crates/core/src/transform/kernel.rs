//! The projection kernel `h`, the Fredholm solution `q(t,s)` and the
//! discrete transform `L₂`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::information::{invert_script_n, InformationSet, ScriptN};
use crate::{Error, Result};

/// Where `𝒩⁻¹` is evaluated inside the double integral of the transform.
///
/// `Inner` uses `𝒩(s)⁻¹` at the outer integration variable, which is what
/// the kernel derivation `q'_s/q` produces. `Displayed` uses `𝒩(t)⁻¹` at the
/// upper limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    #[default]
    Inner,
    Displayed,
}

impl std::str::FromStr for Reading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inner" => Ok(Reading::Inner),
            "displayed" => Ok(Reading::Displayed),
            _ => Err(Error::Invalid(format!("unknown reading `{s}` (inner|displayed)"))),
        }
    }
}

impl std::fmt::Display for Reading {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reading::Inner => "inner",
            Reading::Displayed => "displayed",
        })
    }
}

/// Normalized kernel `h: (0,1) → R^d` with `∫₀¹ h h* = I_d`.
pub trait ProjectionKernel: Send + Sync {
    fn dim(&self) -> usize;

    fn h(&self, s: f64) -> DVector<f64>;

    /// `H(t) = ∫₀ᵗ h(v) dv`.
    fn h_integral(&self, t: f64) -> DVector<f64>;

    /// `𝒩(t) = ∫_t^1 h h* dv`.
    fn script_n(&self, t: f64) -> ScriptN;

    /// Nodes and weights of a quadrature rule for `∫₀ᵗ · dv`.
    fn quadrature(&self, t: f64) -> Vec<(f64, f64)>;
}

/// `h ≡ 1` on `(0,1)`: `H(t) = t`, `𝒩(t) = 1 - t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitKernel;

impl ProjectionKernel for UnitKernel {
    fn dim(&self) -> usize {
        1
    }

    fn h(&self, _s: f64) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }

    fn h_integral(&self, t: f64) -> DVector<f64> {
        DVector::from_element(1, t)
    }

    fn script_n(&self, t: f64) -> ScriptN {
        ScriptN {
            matrix: DMatrix::from_element(1, 1, 1.0 - t),
            min_eig: 1.0 - t,
        }
    }

    /// Composite Simpson rule with 2000 intervals.
    fn quadrature(&self, t: f64) -> Vec<(f64, f64)> {
        const N: usize = 2000;
        let h = t / N as f64;
        (0..=N)
            .map(|k| {
                let w = if k == 0 || k == N {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                (k as f64 * h, w * h / 3.0)
            })
            .collect()
    }
}

/// Kernel `h(s) = I^{-1/2} Ṡ/σ (F⁻¹(s))` of a fitted model, evaluated from
/// the spatial tables at `x = F⁻¹(s)`.
#[derive(Debug, Clone)]
pub struct ModelKernel {
    info: Arc<InformationSet>,
}

impl ModelKernel {
    pub fn new(info: Arc<InformationSet>) -> Self {
        ModelKernel { info }
    }

    pub fn info(&self) -> &Arc<InformationSet> {
        &self.info
    }

    fn x_of(&self, s: f64) -> f64 {
        self.info.law().quantile_clamped(s)
    }
}

impl ProjectionKernel for ModelKernel {
    fn dim(&self) -> usize {
        self.info.dim()
    }

    fn h(&self, s: f64) -> DVector<f64> {
        self.info.h_at_x(self.x_of(s))
    }

    fn h_integral(&self, t: f64) -> DVector<f64> {
        let mut buf = vec![0.0; self.dim()];
        self.info.lower_gf(self.x_of(t), &mut buf);
        self.info.fisher_inv_sqrt() * DVector::from_vec(buf)
    }

    fn script_n(&self, t: f64) -> ScriptN {
        self.info.script_n_at_x(self.x_of(t))
    }

    /// Trapezoid rule in `x` on the law grid, `dv = f(x) dx`, closed by the
    /// partial interval ending at `F⁻¹(t)`.
    fn quadrature(&self, t: f64) -> Vec<(f64, f64)> {
        let law = self.info.law();
        let grid = law.grid();
        let f = law.density_nodes();
        let c = law.cdf_nodes();
        let xt = self.x_of(t);
        let h = grid.step();
        let (j, w) = grid.locate(xt);
        let mut out = Vec::with_capacity(j + 2);
        for k in 0..=j {
            let mut weight = if k == 0 { 0.5 * h } else { h };
            if k == j {
                weight = if j == 0 { 0.0 } else { 0.5 * h };
            }
            out.push((c[k], weight * f[k]));
        }
        // partial interval [x_j, x_t]
        let len = w * h;
        if len > 0.0 {
            out[j].1 += 0.5 * len * f[j];
            out.push((t, 0.5 * len * law.density_at(xt)));
        }
        out
    }
}

/// `h`, `H` and `𝒩⁻¹` tabulated on a uniform `t`-grid.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    t: Vec<f64>,
    dim: usize,
    h: Vec<DVector<f64>>,
    n_inv: Vec<DMatrix<f64>>,
}

impl DiscreteKernel {
    /// `n` nodes spanning `[t_start, t_end]`; every `𝒩(t_k)` must be invertible.
    pub fn new<K: ProjectionKernel + ?Sized>(kernel: &K, t_start: f64, t_end: f64, n: usize) -> Result<Self> {
        if !(0.0 <= t_start && t_start < t_end && t_end < 1.0) || n < 2 {
            return Err(Error::Invalid(format!(
                "t-grid [{t_start}, {t_end}] with {n} nodes is not inside [0, 1)"
            )));
        }
        let step = (t_end - t_start) / (n - 1) as f64;
        let t: Vec<f64> = (0..n).map(|k| t_start + k as f64 * step).collect();
        let mut h = Vec::with_capacity(n);
        let mut n_inv = Vec::with_capacity(n);
        for &tk in &t {
            h.push(kernel.h(tk));
            n_inv.push(invert_script_n(&kernel.script_n(tk), tk)?);
        }
        Ok(DiscreteKernel {
            t,
            dim: kernel.dim(),
            h,
            n_inv,
        })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.t[1] - self.t[0]
    }
}

/// Solution `q(t,s) = 1 + h(s)* 𝒩(t)⁻¹ H(t)` of the Fredholm equation
/// `q(t,s) - ∫₀ᵗ q(t,v) h(s)*h(v) dv = 1`.
pub struct FredholmKernel<K> {
    kernel: K,
    nu: f64,
}

impl<K: ProjectionKernel> FredholmKernel<K> {
    pub fn new(kernel: K, nu: f64) -> Self {
        FredholmKernel { kernel, nu }
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `𝒩(t)⁻¹ H(t)`.
    fn weight(&self, t: f64) -> Result<DVector<f64>> {
        let n_inv = invert_script_n(&self.kernel.script_n(t), t)?;
        Ok(n_inv * self.kernel.h_integral(t))
    }

    /// `q(t,s)` for `ν ≤ s ≤ t ≤ 1-ν`.
    pub fn q(&self, t: f64, s: f64) -> Result<f64> {
        let (lo, hi) = (self.nu, 1.0 - self.nu);
        if !(t >= lo && t <= hi) {
            return Err(Error::Domain { value: t, lo, hi });
        }
        if !(s >= lo && s <= t) {
            return Err(Error::Domain { value: s, lo, hi: t });
        }
        self.q_unclipped(t, s)
    }

    /// `q(t,s)` without the clipping contract; `𝒩(t)` must still be invertible.
    pub fn q_unclipped(&self, t: f64, s: f64) -> Result<f64> {
        Ok(1.0 + self.kernel.h(s).dot(&self.weight(t)?))
    }

    /// `q(t,s) - ∫₀ᵗ q(t,v) h(s)*h(v) dv - 1` by the kernel's quadrature.
    pub fn residual(&self, t: f64, s: f64) -> Result<f64> {
        Ok(self.residual_row(t, &[s])?[0])
    }

    /// [`residual`](Self::residual) at several `s` sharing one `t`.
    pub fn residual_row(&self, t: f64, s: &[f64]) -> Result<Vec<f64>> {
        let w = self.weight(t)?;
        // ∫₀ᵗ q(t,v) h(v) dv, after which the residual is linear in h(s)
        let mut a = DVector::<f64>::zeros(self.kernel.dim());
        for (v, wt) in self.kernel.quadrature(t) {
            let hv = self.kernel.h(v);
            a += &hv * (wt * (1.0 + hv.dot(&w)));
        }
        Ok(s
            .iter()
            .map(|&si| {
                let hs = self.kernel.h(si);
                hs.dot(&w) - hs.dot(&a)
            })
            .collect())
    }

    /// `(∫₀ᵗ q(t,s) ds, ∫₀ᵗ q(s,s)² ds)`, both by the kernel's quadrature.
    pub fn lemma_sides(&self, t: f64) -> Result<(f64, f64)> {
        let w = self.weight(t)?;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for (v, wt) in self.kernel.quadrature(t) {
            let hv = self.kernel.h(v);
            lhs += wt * (1.0 + hv.dot(&w));
            let qvv = if v > 0.0 { 1.0 + hv.dot(&self.weight(v)?) } else { 1.0 };
            rhs += wt * qvv * qvv;
        }
        Ok((lhs, rhs))
    }
}

/// `q(t,s)` from the Fredholm solution formula.
pub fn fredholm_q<K: ProjectionKernel>(kernel: &FredholmKernel<K>, t: f64, s: f64) -> Result<f64> {
    kernel.q(t, s)
}

/// Discrete transform of a process `U` sampled on the kernel's `t`-grid.
///
/// With `S_k = Σ_{l<k} h_l (U_{l+1} - U_l)` (left-point Itô sums),
/// `Inner` gives `w_k = U_k + Σ_{j<k} S_j* 𝒩_j⁻¹ h_j Δt` and `Displayed`
/// gives `w_k = U_k + Σ_{j<k} S_j* 𝒩_k⁻¹ h_j Δt`.
pub fn transform_l2(u: &[f64], kernel: &DiscreteKernel, reading: Reading) -> Result<Vec<f64>> {
    let n = kernel.len();
    if u.len() != n {
        return Err(Error::Invalid(format!(
            "process has {} samples but the t-grid has {n}",
            u.len()
        )));
    }
    let d = kernel.dim;
    let dt = kernel.step();
    let mut out = Vec::with_capacity(n);
    let mut s = DVector::<f64>::zeros(d);
    match reading {
        Reading::Inner => {
            let mut acc = 0.0;
            for k in 0..n {
                out.push(u[k] + acc);
                if k + 1 < n {
                    acc += s.dot(&(&kernel.n_inv[k] * &kernel.h[k])) * dt;
                    s += &kernel.h[k] * (u[k + 1] - u[k]);
                }
            }
        }
        Reading::Displayed => {
            let mut p = DMatrix::<f64>::zeros(d, d);
            for k in 0..n {
                out.push(u[k] + kernel.n_inv[k].component_mul(&p).sum());
                if k + 1 < n {
                    p += &s * kernel.h[k].transpose() * dt;
                    s += &kernel.h[k] * (u[k + 1] - u[k]);
                }
            }
        }
    }
    Ok(out)
}
