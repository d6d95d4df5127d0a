//! Flat `key = value` experiment configuration.
//!
//! Blank lines and text after `#` are ignored. Unknown keys are errors.
//!
//! ```text
//! model = ou            # fitted family
//! theta = 1.0           # true parameter, comma separated when d > 1
//! true_model = ou_sine  # simulate from another drift (optional)
//! horizon = 500
//! dt = 0.01
//! replications = 300
//! epsilon = 0.05
//! variant = theorem     # theorem | corrected | linear | simple
//! ```

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::estimate::DensityEstimator;
use crate::limitdist::REFERENCE_SEED;
use crate::models::{builtin, DiffusionModel, ScaledSigma};
use crate::transform::{Reading, Variant};
use crate::{Error, Result};

/// Every setting of one test or experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Built-in family that is fitted and tested.
    pub model: String,
    /// Parameter used to simulate paths.
    pub theta: Vec<f64>,
    /// Built-in family that generates the paths, when it differs from `model`.
    pub true_model: Option<String>,
    /// Multiplies `σ` in both the simulated and the fitted model.
    pub sigma_scale: f64,
    pub horizon: f64,
    pub dt: f64,
    pub replications: usize,
    pub epsilon: f64,
    pub variant: Variant,
    pub reading: Reading,
    /// Statistics use `F ∈ [ν, 1-ν]`.
    pub nu_clip: f64,
    /// Tail mass dropped by the invariant-law construction.
    pub law_nu_clip: f64,
    pub law_grid: usize,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub limit_n_mc: usize,
    pub limit_kl_terms: usize,
    pub limit_seed: u64,
    /// Hypothesised parameter for the `simple` variant; defaults to `theta`.
    pub theta0: Option<Vec<f64>>,
    pub density_estimator: DensityEstimator,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "ou".into(),
            theta: vec![1.0],
            true_model: None,
            sigma_scale: 1.0,
            horizon: 500.0,
            dt: 0.01,
            replications: 300,
            epsilon: 0.05,
            variant: Variant::Theorem,
            reading: Reading::Inner,
            nu_clip: 1e-3,
            law_nu_clip: 1e-4,
            law_grid: 4000,
            master_seed: 1,
            out_dir: PathBuf::from("out"),
            limit_n_mc: 100_000,
            limit_kl_terms: 1000,
            limit_seed: REFERENCE_SEED,
            theta0: None,
            density_estimator: DensityEstimator::LocalTime,
        }
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

impl ExperimentConfig {
    /// Parses the text format, starting from the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, found `{body}`"),
            })?;
            c.set(key.trim(), value.trim())
                .map_err(|msg| Error::Config { line, msg })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "model" => self.model = v.to_string(),
            "theta" => self.theta = parse_list(v)?,
            "true_model" => self.true_model = Some(v.to_string()),
            "sigma_scale" => self.sigma_scale = parse(v)?,
            "horizon" => self.horizon = parse(v)?,
            "dt" => self.dt = parse(v)?,
            "replications" => self.replications = parse(v)?,
            "epsilon" => self.epsilon = parse(v)?,
            "variant" => self.variant = v.parse().map_err(|e: Error| e.to_string())?,
            "reading" => self.reading = v.parse().map_err(|e: Error| e.to_string())?,
            "nu_clip" => self.nu_clip = parse(v)?,
            "law_nu_clip" => self.law_nu_clip = parse(v)?,
            "law_grid" => self.law_grid = parse(v)?,
            "master_seed" => self.master_seed = parse(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "limit_n_mc" => self.limit_n_mc = parse(v)?,
            "limit_kl_terms" => self.limit_kl_terms = parse(v)?,
            "limit_seed" => self.limit_seed = parse(v)?,
            "theta0" => self.theta0 = Some(parse_list(v)?),
            "density_estimator" => {
                self.density_estimator = match v {
                    "local_time" => DensityEstimator::LocalTime,
                    _ => match v.strip_prefix("kernel:") {
                        Some(b) => DensityEstimator::Kernel { bandwidth: parse(b)? },
                        None => return Err(format!("density_estimator must be `local_time` or `kernel:<bandwidth>`, got `{v}`")),
                    },
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Checks ranges and that the named models exist.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        let positive = [
            ("sigma_scale", self.sigma_scale),
            ("horizon", self.horizon),
            ("dt", self.dt),
            ("nu_clip", self.nu_clip),
            ("law_nu_clip", self.law_nu_clip),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if self.dt > self.horizon / 100.0 {
            return bad(format!("dt must not exceed horizon/100, got {} for horizon {}", self.dt, self.horizon));
        }
        if self.nu_clip >= 0.5 {
            return bad(format!("nu_clip must be below 1/2, got {}", self.nu_clip));
        }
        if self.law_nu_clip > 1e-3 {
            return bad(format!("law_nu_clip must not exceed 1e-3, got {}", self.law_nu_clip));
        }
        if self.law_grid < 100 {
            return bad(format!("law_grid must be at least 100, got {}", self.law_grid));
        }
        if self.limit_n_mc < 10_000 || self.limit_kl_terms < 100 {
            return bad("limit_n_mc must be at least 10^4 and limit_kl_terms at least 100".into());
        }
        if let DensityEstimator::Kernel { bandwidth } = self.density_estimator {
            if !(bandwidth > 0.0) {
                return bad(format!("kernel bandwidth must be positive, got {bandwidth}"));
            }
        }
        let fitted = self.fitted_model()?;
        let truth = self.true_model()?;
        if truth.dim() != self.theta.len() {
            return bad(format!(
                "theta has {} entries, model `{}` takes {}",
                self.theta.len(),
                truth.name(),
                truth.dim()
            ));
        }
        if let Some(t0) = &self.theta0 {
            if t0.len() != fitted.dim() {
                return bad(format!("theta0 has {} entries, model takes {}", t0.len(), fitted.dim()));
            }
        }
        if self.variant == Variant::Linear && !(fitted.is_linear_in_theta() && fitted.dim() == 1) {
            return bad(format!("variant `linear` needs a drift linear in one parameter; `{}` is not", self.model));
        }
        Ok(())
    }

    fn scaled(&self, name: &str) -> Result<Arc<dyn DiffusionModel>> {
        let m = builtin(name)?;
        Ok(if self.sigma_scale == 1.0 {
            m
        } else {
            Arc::new(ScaledSigma::new(m, self.sigma_scale))
        })
    }

    /// The family that is fitted and tested.
    pub fn fitted_model(&self) -> Result<Arc<dyn DiffusionModel>> {
        self.scaled(&self.model)
    }

    /// The family that generates paths.
    pub fn true_model(&self) -> Result<Arc<dyn DiffusionModel>> {
        self.scaled(self.true_model.as_deref().unwrap_or(&self.model))
    }

    /// `θ₀` for the `simple` variant.
    pub fn theta0(&self) -> &[f64] {
        self.theta0.as_deref().unwrap_or(&self.theta)
    }
}
