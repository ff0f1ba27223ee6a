//! IO, configuration, model backends, and experiment orchestration for the
//! volregime toolkit. The algorithmic core lives in `volregime-core`.

pub mod backend;
pub mod config;
pub mod ingest;
pub mod poolio;
pub mod runner;

pub use config::ExperimentConfig;
