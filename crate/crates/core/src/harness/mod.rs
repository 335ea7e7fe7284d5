//! Adversaries, the Monte-Carlo experiment runner and the property suite.

pub mod adversary;
pub mod experiment;
pub mod fuzz;
pub mod verify;

pub use adversary::{Adversary, AdversaryPolicy};
pub use experiment::{
    run_experiment, run_experiment_with, write_csv, CheckSummary, ExperimentConfig,
    ExperimentReport, MechanismSummary, PairedStats, RunOptions, TrialFailure,
};
pub use verify::{
    verify_properties, verify_properties_with, Property, PropertyReport, VerifyOptions,
};
