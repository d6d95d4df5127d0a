//! Martingale transformation of `U(t)` and the path statistics built on it.

mod kernel;
mod statistics;

pub use kernel::{
    fredholm_q, transform_l2, DiscreteKernel, FredholmKernel, ModelKernel, ProjectionKernel, Reading, UnitKernel,
};
pub use statistics::{
    clipped_grid, delta_statistic, full_range_a, linear_b_statistic, qr_functions, simple_delta, v_statistic,
    xi_statistic, CurveKind, QrValues, StatisticCurve, StatisticTables, Variant, DEFAULT_NU,
};
