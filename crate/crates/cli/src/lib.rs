//! Config-driven front end for the `minbo` estimators: CSV loading, report
//! rendering and the `estimate`, `simulate` and `validate` commands.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod fixture;
pub mod format;
pub mod report;

pub use error::CliError;
