//! Forcing ingestion and synthesis, experiment orchestration, posterior
//! summaries and the on-disk file formats used by the command-line tool.

pub mod config;
pub mod experiments;
pub mod files;
pub mod forcing;
pub mod summary;

pub use config::{ExperimentConfig, Schedule, Span};
pub use experiments::{
    forecast_to_dir, infer_to_dir, read_posterior_dir, run_forecast, run_infer, run_prior_ensemble, run_twin,
    simulate_to_dir, summarize_file, twin_to_dir, twin_truth, EnsembleOutput, Experiment, ForecastOutput,
    InferOutput, TwinOutput, TwinTruth,
};
pub use files::PosteriorDraw;
pub use forcing::{load_forcing, parse_forcing, synth_climatology, ClimatologyParams, ForcingSeries};
pub use summary::{quantiles, summarize_trajectories, QuantileRow, QuantileSummary};
