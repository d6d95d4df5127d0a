//! JSON record of one test decision.

use serde::{Deserialize, Serialize};

use crate::transform::{Reading, Variant};

/// Numerical context of a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub boundary_hit: bool,
    pub converged: bool,
    /// `min λ(𝒩(t))` over `t ∈ [ν, 1-ν]`; absent for the `simple` variant.
    pub min_eig_n: Option<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub nu_clip: f64,
}

/// Outcome of `ψ = 1{δ_T > c_ε}` on one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub model: String,
    pub theta_hat: Vec<f64>,
    pub delta_t: f64,
    pub c_eps: f64,
    pub epsilon: f64,
    pub reject: bool,
    pub variant: Variant,
    pub reading: Reading,
    pub diagnostics: Diagnostics,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
