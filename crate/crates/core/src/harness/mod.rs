//! Batch experiments, the optimality oracle and output files.

pub mod config;
pub mod experiment;
pub mod identity;
pub mod oracle;
pub mod summary;

pub use config::{ExperimentConfig, Variant};
pub use experiment::{run_experiment, run_experiment_with, Parallelism, ResultsTable};
pub use oracle::{oracle_best, OracleResult};
pub use summary::summarize;
