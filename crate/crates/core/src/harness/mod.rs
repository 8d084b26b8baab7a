//! Experiment orchestration: dataset synthesis, the with/without-mask
//! ablation, mask sensitivity, and reports.

pub mod benchmark;
mod config;
mod dataset;
mod experiment;
pub mod report;

pub use benchmark::{class_gains, BenchmarkConfig};
pub use config::{DatasetConfig, ExperimentConfig};
pub use dataset::{load_directory_sources, Dataset, MANIFEST_FILE};
pub use experiment::{
    eval_rows, evaluate_baseline, evaluate_network, mask_shuffle_study, param_distance,
    run_ablation, run_ablation_on, run_mask_sensitivity, subset_rows, train_arm, training_examples,
    write_ablation, AblationOutcome, ArmPair, Baseline, TrainedArm,
};
pub use report::{
    AblationReport, EvalReport, MaskSensitivity, ReportRow, SeedPair, ShuffleStudy, Subset,
};
