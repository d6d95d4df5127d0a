//! Single-path tests and replicated level/power experiments.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{Diagnostics, TestReport};
use crate::estimate::mle_fit;
use crate::information::InformationSet;
use crate::limitdist::{ks_to_table, sample_limit_law, LimitLawTable};
use crate::models::{build_invariant_law, InvariantLaw};
use crate::simulate::{simulate_path, Path, RngStream};
use crate::transform::{
    delta_statistic, linear_b_statistic, simple_delta, v_statistic, Reading, StatisticCurve, StatisticTables, Variant,
};
use crate::{Error, Result};

/// Share of failed replications above which an experiment is void.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

const LEVEL_NOTE: &str = "level guarantee is asymptotic; finite-T tolerance bands are user choices";

/// Limit-law table for the config's `limit_*` settings.
pub fn limit_table(config: &ExperimentConfig) -> Result<LimitLawTable> {
    sample_limit_law(config.limit_n_mc, config.limit_kl_terms, config.limit_seed)
}

/// Fits, transforms and decides on one path; also returns the curve.
pub fn run_test_with_curve(config: &ExperimentConfig, path: &Path, c_eps: f64) -> Result<(TestReport, StatisticCurve)> {
    let model = config.fitted_model()?;
    let law_at = |theta: &[f64]| build_invariant_law(model.as_ref(), theta, config.law_grid, config.law_nu_clip);

    let (theta_hat, boundary_hit, converged, min_eig_n, curve, delta) = match config.variant {
        Variant::Simple => {
            let theta0 = config.theta0().to_vec();
            let law0 = law_at(&theta0)?;
            let (curve, delta) = simple_delta(model.as_ref(), path, &theta0, &law0, config.nu_clip)?;
            (theta0, false, true, None, curve, delta)
        }
        variant => {
            let fit = mle_fit(model.as_ref(), path)?;
            let law = Arc::new(law_at(&fit.theta_hat)?);
            let info = Arc::new(InformationSet::new(model.clone(), law.clone())?);
            let min_eig = info.min_eig_script_n(config.nu_clip)?;
            let reading = if variant == Variant::Linear {
                Reading::Inner
            } else {
                config.reading
            };
            let tables = StatisticTables::new(info, config.nu_clip, reading)?;
            let curve = if variant == Variant::Linear {
                linear_b_statistic(model.as_ref(), path, &tables)?
            } else {
                v_statistic(tables.info().model().as_ref(), path, &tables, variant)?
            };
            let delta = delta_statistic(&curve, &law);
            (fit.theta_hat, fit.boundary_hit, fit.converged, Some(min_eig), curve, delta)
        }
    };
    if !delta.is_finite() {
        return Err(Error::Evaluation {
            x: f64::NAN,
            what: "δ_T is not finite".into(),
        });
    }
    let report = TestReport {
        model: model.name().to_string(),
        theta_hat,
        delta_t: delta,
        c_eps,
        epsilon: config.epsilon,
        reject: delta > c_eps,
        variant: config.variant,
        reading: config.reading,
        diagnostics: Diagnostics {
            boundary_hit,
            converged,
            min_eig_n,
            dt: path.dt(),
            horizon: path.horizon(),
            nu_clip: config.nu_clip,
        },
    };
    Ok((report, curve))
}

/// Fits, transforms and decides on one path.
pub fn run_test(config: &ExperimentConfig, path: &Path, c_eps: f64) -> Result<TestReport> {
    run_test_with_curve(config, path, c_eps).map(|(r, _)| r)
}

/// One row of the per-replication CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub theta_hat: Option<Vec<f64>>,
    pub delta_t: Option<f64>,
    pub reject: Option<bool>,
    pub failure: Option<String>,
}

/// Aggregates written to the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub replications: usize,
    pub completed: usize,
    pub failures: usize,
    pub failure_breakdown: BTreeMap<String, usize>,
    pub rejections: usize,
    pub rejection_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ks_to_limit: f64,
    pub c_eps: f64,
    pub epsilon: f64,
    pub variant: Variant,
    pub reading: Reading,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<RepRecord>,
    pub summary: ExperimentSummary,
}

impl ExperimentOutcome {
    /// `δ_T` of the completed replications in replication order.
    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.delta_t).collect()
    }
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn replicate(config: &ExperimentConfig, sim_law: &InvariantLaw, rep: usize, c_eps: f64) -> RepRecord {
    let truth = config.true_model();
    let result = truth.and_then(|m| {
        let mut rng = RngStream::new(config.master_seed, rep as u64);
        let path = simulate_path(m.as_ref(), &config.theta, sim_law, config.horizon, config.dt, &mut rng)?;
        run_test(config, &path, c_eps)
    });
    match result {
        // a pinned estimate has no interior asymptotics, so it is excluded
        Ok(r) if r.diagnostics.boundary_hit => RepRecord {
            rep,
            seed: config.master_seed,
            theta_hat: Some(r.theta_hat),
            delta_t: None,
            reject: None,
            failure: Some("boundary".into()),
        },
        Ok(r) => RepRecord {
            rep,
            seed: config.master_seed,
            theta_hat: Some(r.theta_hat),
            delta_t: Some(r.delta_t),
            reject: Some(r.reject),
            failure: None,
        },
        Err(e) => RepRecord {
            rep,
            seed: config.master_seed,
            theta_hat: None,
            delta_t: None,
            reject: None,
            failure: Some(e.kind().to_string()),
        },
    }
}

/// Runs the replications in parallel and aggregates them; no files written.
pub fn simulate_experiment(config: &ExperimentConfig, table: &LimitLawTable) -> Result<ExperimentOutcome> {
    config.validate()?;
    let c_eps = table.quantile_c_eps(config.epsilon)?;
    let truth = config.true_model()?;
    let sim_law = build_invariant_law(truth.as_ref(), &config.theta, config.law_grid, config.law_nu_clip)?;
    let records: Vec<RepRecord> = (0..config.replications)
        .into_par_iter()
        .map(|rep| replicate(config, &sim_law, rep, c_eps))
        .collect();

    let mut breakdown = BTreeMap::new();
    for r in &records {
        if let Some(f) = &r.failure {
            *breakdown.entry(f.clone()).or_insert(0) += 1;
        }
    }
    let deltas: Vec<f64> = records.iter().filter_map(|r| r.delta_t).collect();
    let completed = deltas.len();
    let rejections = records.iter().filter(|r| r.reject == Some(true)).count();
    let (ci_lo, ci_hi) = wilson_interval(rejections, completed);
    let summary = ExperimentSummary {
        replications: config.replications,
        completed,
        failures: config.replications - completed,
        failure_breakdown: breakdown,
        rejections,
        rejection_rate: if completed > 0 {
            rejections as f64 / completed as f64
        } else {
            f64::NAN
        },
        ci_lo,
        ci_hi,
        ks_to_limit: if completed > 0 {
            ks_to_table(&deltas, table)
        } else {
            f64::NAN
        },
        c_eps,
        epsilon: config.epsilon,
        variant: config.variant,
        reading: config.reading,
    };
    Ok(ExperimentOutcome { records, summary })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-replication CSV: `rep,seed,theta_hat...,delta_T,reject,failure`.
pub fn write_replications<W: Write>(mut w: W, records: &[RepRecord], dim: usize) -> Result<()> {
    let theta_cols: Vec<String> = if dim == 1 {
        vec!["theta_hat".into()]
    } else {
        (1..=dim).map(|k| format!("theta_hat_{k}")).collect()
    };
    writeln!(w, "rep,seed,{},delta_T,reject,failure", theta_cols.join(","))?;
    for r in records {
        let theta: Vec<String> = match &r.theta_hat {
            Some(t) => t.iter().map(|v| v.to_string()).collect(),
            None => vec![String::new(); dim],
        };
        let reject = r.reject.map(|b| if b { "1" } else { "0" }).unwrap_or("");
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.rep,
            r.seed,
            theta.join(","),
            fmt_opt(r.delta_t),
            reject,
            r.failure.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

/// Summary CSV, one header row and one value row.
pub fn write_summary<W: Write>(mut w: W, s: &ExperimentSummary) -> Result<()> {
    let breakdown: Vec<String> = s.failure_breakdown.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    writeln!(
        w,
        "replications,completed,failures,failure_breakdown,rejections,rejection_rate,ci_lo,ci_hi,ks_to_limit,c_eps,epsilon,variant,reading,note"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.replications,
        s.completed,
        s.failures,
        breakdown.join(";"),
        s.rejections,
        s.rejection_rate,
        s.ci_lo,
        s.ci_hi,
        s.ks_to_limit,
        s.c_eps,
        s.epsilon,
        s.variant,
        s.reading,
        LEVEL_NOTE
    )?;
    Ok(())
}

/// Runs an experiment and writes `replications.csv` and `summary.csv` into
/// the output directory. More than 10% failed replications is an error,
/// reported after both files are written.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let table = limit_table(config)?;
    run_experiment_with_table(config, &table)
}

pub fn run_experiment_with_table(config: &ExperimentConfig, table: &LimitLawTable) -> Result<ExperimentOutcome> {
    let outcome = simulate_experiment(config, table)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let dim = config.fitted_model()?.dim();
    let mut w = std::io::BufWriter::new(std::fs::File::create(config.out_dir.join("replications.csv"))?);
    write_replications(&mut w, &outcome.records, dim)?;
    w.flush()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(config.out_dir.join("summary.csv"))?);
    write_summary(&mut w, &outcome.summary)?;
    w.flush()?;

    let s = &outcome.summary;
    if s.failures as f64 > MAX_FAILURE_SHARE * s.replications as f64 {
        let parts: Vec<String> = s.failure_breakdown.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        return Err(Error::Experiment(format!(
            "{} of {} replications failed ({})",
            s.failures,
            s.replications,
            parts.join(", ")
        )));
    }
    Ok(outcome)
}
