//! Batch driver: config parsing, the subcommand pipeline and run reports.

pub mod config;
pub mod pipeline;
pub mod report;
