//! Experiment driver: configuration, output layout, the interface pipeline
//! and the verifier dispatch used by the `sle4lab` binary.

pub mod app;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod verify;

pub use config::ExperimentConfig;
pub use output::ExperimentDir;
pub use pipeline::{run_interface_pipeline, Pipeline, PipelineReport};
pub use verify::{run_verifier, Verifier, VerifierOutcome};
