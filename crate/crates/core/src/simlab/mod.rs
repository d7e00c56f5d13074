//! Simulation designs and the Monte-Carlo harness.

mod montecarlo;
mod settings;

pub use montecarlo::{
    monte_carlo, true_dims, true_projections, Cell, DimSource, EstimatorConfig, EstimatorDiagnostics, Method, MonteCarloPlan,
    MonteCarloReport, MAX_FAILURE_RATE,
};
pub use settings::{EvalPoint, SettingId, SettingSpec, TrueDims, TrueMatrices};
