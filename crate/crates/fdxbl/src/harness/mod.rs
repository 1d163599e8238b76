//! Experiment orchestration: scenario configuration, Monte Carlo evaluation
//! with common random numbers, CDF and sweep statistics, CSV persistence,
//! and the command-line interface.

pub mod cli;
mod config;
mod dataset;
mod experiment;
mod plot;
mod results;

pub use config::ExperimentConfig;
pub use dataset::{generate_dataset, load_dataset, save_dataset, Dataset};
pub use experiment::{
    evaluate_methods, realization_for_pair, run_cdf_experiment, run_kappa_sweep, CdfOutput,
    KappaSweepOutput, Method, MethodRun, SweepPoint,
};
pub use results::{emit_results, empirical_cdf, load_results, ResultRow};
