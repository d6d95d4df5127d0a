use std::sync::Arc;

use super::DiffusionModel;
use crate::{Error, Result};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &["ou", "cubic", "ou_sine", "linear_tanh", "ou_hetero", "ou_mean"];

type Scalar = fn(f64) -> f64;

/// One-parameter drift `S(θ,x) = b(x) + θ a(x)` with `σ(x) = c·s(x)`.
#[derive(Clone)]
pub struct AffineDrift {
    name: String,
    base: Scalar,
    a: Scalar,
    a_x: Scalar,
    sig: Scalar,
    sig_x: Scalar,
    scale: f64,
    bounds: Vec<(f64, f64)>,
}

impl std::fmt::Debug for AffineDrift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineDrift")
            .field("name", &self.name)
            .field("scale", &self.scale)
            .field("bounds", &self.bounds)
            .finish()
    }
}

fn one(_: f64) -> f64 {
    1.0
}

fn zero(_: f64) -> f64 {
    0.0
}

fn neg_x(x: f64) -> f64 {
    -x
}

fn minus_one(_: f64) -> f64 {
    -1.0
}

fn hetero(x: f64) -> f64 {
    1.0 + 0.5 / (1.0 + x * x)
}

fn hetero_x(x: f64) -> f64 {
    let d = 1.0 + x * x;
    -x / (d * d)
}

impl AffineDrift {
    /// Unit diffusion coefficient, user-supplied `b`, `a`, `a'`.
    pub fn custom(name: &str, base: Scalar, a: Scalar, a_x: Scalar, bounds: Vec<(f64, f64)>) -> Self {
        AffineDrift {
            name: name.to_string(),
            base,
            a,
            a_x,
            sig: one,
            sig_x: zero,
            scale: 1.0,
            bounds,
        }
    }

    /// `S = -θx`, `σ = 1`.
    pub fn ou() -> Self {
        Self::custom("ou", zero, neg_x, minus_one, vec![(0.05, 10.0)])
    }

    /// `S = -θx - x³`, `σ = 1`.
    pub fn cubic() -> Self {
        Self::custom("cubic", |x| -x * x * x, neg_x, minus_one, vec![(0.05, 10.0)])
    }

    /// `S = -θx - sin(x)/2`, `σ = 1`.
    pub fn ou_sine() -> Self {
        Self::custom("ou_sine", |x| -0.5 * x.sin(), neg_x, minus_one, vec![(0.05, 10.0)])
    }

    /// `S = -θ tanh(x)`, `σ = 1`.
    pub fn linear_tanh() -> Self {
        Self::custom(
            "linear_tanh",
            zero,
            |x| -x.tanh(),
            |x| {
                let c = x.cosh();
                -1.0 / (c * c)
            },
            vec![(0.5, 10.0)],
        )
    }

    /// `S = -θx`, `σ(x) = 1 + 0.5/(1 + x²)`.
    pub fn ou_hetero() -> Self {
        let mut m = Self::custom("ou_hetero", zero, neg_x, minus_one, vec![(0.05, 10.0)]);
        m.sig = hetero;
        m.sig_x = hetero_x;
        m
    }

    /// `S = -x` for every θ: the parameter is not identifiable.
    pub fn zero_gradient() -> Self {
        Self::custom("zero_gradient", neg_x, zero, zero, vec![(0.05, 10.0)])
    }

    /// `S ≡ 0`: no invariant law.
    pub fn zero_drift() -> Self {
        Self::custom("zero_drift", zero, zero, zero, vec![(0.05, 10.0)])
    }

    /// Same model with `σ` replaced by `c·σ`.
    pub fn with_sigma_scale(mut self, c: f64) -> Self {
        self.scale *= c;
        self
    }

    pub fn a(&self, x: f64) -> f64 {
        (self.a)(x)
    }

    pub fn base(&self, x: f64) -> f64 {
        (self.base)(x)
    }
}

impl DiffusionModel for AffineDrift {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        1
    }

    fn theta_box(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn drift(&self, theta: &[f64], x: f64) -> f64 {
        (self.base)(x) + theta[0] * (self.a)(x)
    }

    fn drift_grad(&self, _theta: &[f64], x: f64, out: &mut [f64]) {
        out[0] = (self.a)(x);
    }

    fn drift_grad_x(&self, _theta: &[f64], x: f64, out: &mut [f64]) {
        out[0] = (self.a_x)(x);
    }

    fn sigma(&self, x: f64) -> f64 {
        self.scale * (self.sig)(x)
    }

    fn sigma_x(&self, x: f64) -> f64 {
        self.scale * (self.sig_x)(x)
    }

    fn is_linear_in_theta(&self) -> bool {
        true
    }
}

/// `S = θ₁(θ₂ - x)`, `σ = 1`: mean-reverting with unknown rate and level.
#[derive(Debug, Clone)]
pub struct TwoParamOu {
    bounds: Vec<(f64, f64)>,
}

impl TwoParamOu {
    pub fn new() -> Self {
        TwoParamOu {
            bounds: vec![(0.05, 10.0), (-5.0, 5.0)],
        }
    }
}

impl Default for TwoParamOu {
    fn default() -> Self {
        Self::new()
    }
}

impl DiffusionModel for TwoParamOu {
    fn name(&self) -> &str {
        "ou_mean"
    }

    fn dim(&self) -> usize {
        2
    }

    fn theta_box(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn drift(&self, theta: &[f64], x: f64) -> f64 {
        theta[0] * (theta[1] - x)
    }

    fn drift_grad(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        out[0] = theta[1] - x;
        out[1] = theta[0];
    }

    fn drift_grad_x(&self, _theta: &[f64], _x: f64, out: &mut [f64]) {
        out[0] = -1.0;
        out[1] = 0.0;
    }

    fn sigma(&self, _x: f64) -> f64 {
        1.0
    }

    fn sigma_x(&self, _x: f64) -> f64 {
        0.0
    }
}

/// Wraps any model, multiplying its diffusion coefficient by `c`.
#[derive(Debug, Clone)]
pub struct ScaledSigma {
    inner: Arc<dyn DiffusionModel>,
    c: f64,
    name: String,
}

impl ScaledSigma {
    pub fn new(inner: Arc<dyn DiffusionModel>, c: f64) -> Self {
        let name = format!("{}*{}", inner.name(), c);
        ScaledSigma { inner, c, name }
    }
}

impl DiffusionModel for ScaledSigma {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn theta_box(&self) -> &[(f64, f64)] {
        self.inner.theta_box()
    }

    fn drift(&self, theta: &[f64], x: f64) -> f64 {
        self.inner.drift(theta, x)
    }

    fn drift_grad(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        self.inner.drift_grad(theta, x, out)
    }

    fn drift_grad_x(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        self.inner.drift_grad_x(theta, x, out)
    }

    fn sigma(&self, x: f64) -> f64 {
        self.c * self.inner.sigma(x)
    }

    fn sigma_x(&self, x: f64) -> f64 {
        self.c * self.inner.sigma_x(x)
    }

    fn is_linear_in_theta(&self) -> bool {
        self.inner.is_linear_in_theta()
    }
}

/// Look up a built-in model by name.
pub fn builtin(name: &str) -> Result<Arc<dyn DiffusionModel>> {
    Ok(match name {
        "ou" => Arc::new(AffineDrift::ou()),
        "cubic" => Arc::new(AffineDrift::cubic()),
        "ou_sine" => Arc::new(AffineDrift::ou_sine()),
        "linear_tanh" => Arc::new(AffineDrift::linear_tanh()),
        "ou_hetero" => Arc::new(AffineDrift::ou_hetero()),
        "ou_mean" => Arc::new(TwoParamOu::new()),
        _ => {
            return Err(Error::Invalid(format!(
                "unknown model `{name}` (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}
