//! Data ingestion, synthetic instances, experiment configs and outputs.

pub mod config;
pub mod experiment;
pub mod libsvm;
pub mod rff;
pub mod synth;

pub use config::{Algorithm, ExperimentConfig, LambdaRule, SourceKind};
pub use experiment::{build_problem, run_experiment, run_single, ExperimentReport, Problem, RunRecord};
pub use libsvm::{parse_libsvm, parse_libsvm_str, to_libsvm_string, write_libsvm};
pub use rff::rff_transform;
pub use synth::{synth_classification, synth_logistic, synth_ridge};
