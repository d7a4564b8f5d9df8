//! Command-line front end: builds networks from exposure panels, writes
//! spectral metrics, treatment-effect tables and cascade reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod tables;

pub use commands::{cmd_analyze, cmd_build, cmd_did, cmd_stress, cmd_synth, load_series};
pub use config::{BootstrapSettings, RunConfig};
pub use error::{CliError, Result};
