//! Command-line front end: scenario files, run artifacts, sweeps and the
//! verification suites.

pub mod config;
pub mod error;
pub mod run;
pub mod suites;
pub mod sweep;

pub use config::ScenarioConfig;
pub use error::{CliError, Result};
