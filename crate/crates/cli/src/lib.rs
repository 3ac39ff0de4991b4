//! Command-line front end: scenario files, sweeps and reports.

pub mod commands;
pub mod error;
pub mod plot;
pub mod scenario_file;
pub mod units;

pub use error::CliError;
