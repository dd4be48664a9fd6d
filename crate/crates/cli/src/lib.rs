//! Experiment runner behind the `simbench` binary: configuration, the
//! append-only result store, sweep orchestration and figure export.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod store;

pub use config::ExperimentConfig;
pub use store::ResultStore;
