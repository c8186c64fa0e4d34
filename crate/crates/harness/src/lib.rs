//! Experiment harness: configs, the training loop, evaluation protocols,
//! run logs and reports.

pub mod agent;
pub mod baseline;
pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod protocols;
pub mod report;
pub mod runlog;
pub mod setup;
pub mod stats;
pub mod train;

pub use error::{HarnessError, Result};
