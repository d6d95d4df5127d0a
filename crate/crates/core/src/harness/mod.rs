//! Configuration, single-path tests and replicated experiments.

mod config;
mod experiment;
mod report;

pub use config::ExperimentConfig;
pub use experiment::{
    limit_table, run_experiment, run_experiment_with_table, run_test, run_test_with_curve, simulate_experiment,
    wilson_interval, write_replications, write_summary, ExperimentOutcome, ExperimentSummary, RepRecord,
    MAX_FAILURE_SHARE,
};
pub use report::{Diagnostics, TestReport};
