//! Batch driver: configuration, pipeline stages and reports.

pub mod config;
pub mod run;
