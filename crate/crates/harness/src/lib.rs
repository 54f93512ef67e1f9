//! Experiment harness for the hybrid solver: dataset files, training and
//! fine-tuning runs, single solves with trace export, and paired
//! iteration-count benchmarks.

pub mod bench;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use error::{HarnessError, Result};
