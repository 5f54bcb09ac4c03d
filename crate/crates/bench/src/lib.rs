//! Monte Carlo benchmark harness for hybrid-array covariance reconstruction.
//!
//! A TOML [`config::ExperimentConfig`] describes a scenario template and a
//! sweep; [`harness::run_sweep`] runs independent seeded trials in parallel
//! and reports one [`harness::ResultRow`] per sweep value and method.
//! [`flops::flop_report`] itemises the arithmetic cost of the estimator.

pub mod config;
pub mod error;
pub mod flops;
pub mod harness;

pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
