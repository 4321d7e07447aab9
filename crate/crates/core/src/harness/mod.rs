//! Experiment plumbing: configuration, seeding, the training loop, sweeps,
//! the K-means comparison and file exports.

pub mod config;
pub mod export;
pub mod record;
pub mod runner;
pub mod seeds;

pub use config::{Dataset, ExperimentConfig};
pub use export::{export_filters, export_reconstructions, filter_bytes};
pub use record::{RecordRow, RunRecord, RECORD_COLUMNS};
pub use runner::{
    evaluate, evaluate_snapshot, run_d_sweep, run_kmeans_baseline, run_lambda_sweep, run_training,
    train, BaselineRow, Evaluation, ExperimentData, LambdaRow, SizeRow, TrainingOutcome,
};
