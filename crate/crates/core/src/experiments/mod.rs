//! Seeded Monte Carlo sweeps over SNR, pilot length and VR size, with CSV,
//! JSON and SVG output.

mod config;
mod output;
mod runner;
mod seed;

pub use config::{
    Axis, CodebookConfig, EstimatorConfig, GeometryConfig, Metric, ObservationConfig, OutputConfig, SweepConfig,
    UserConfig, View, VrSpec,
};
pub use output::{emit_results, render_csv, render_svg, SweepSummary, VERSION_UNKNOWN};
pub use runner::{
    grid_points, run_sweep, run_trial, sample_instance, sparsity_for, Aggregate, Algorithm, AlgorithmSummary,
    BeliefProfile, GridPoint, PointSummary, SweepResult, TrialInstance, THREADS_ENV,
};
pub use seed::{child_seed, splitmix64};
