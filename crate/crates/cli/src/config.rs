use std::path::{Path, PathBuf};

use fragility::inference::MIN_REPLICATES;
use fragility::network::AllocationMethod;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub seed: u64,
}

/// Everything a subcommand needs; assembled from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Exposure panel CSV.
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub method: AllocationMethod,
    /// Explicit partition; when both are empty the years are split at
    /// `treatment_year`.
    pub pre_years: Vec<i32>,
    pub post_years: Vec<i32>,
    pub treatment_year: i32,
    pub bootstrap: Option<BootstrapSettings>,
    pub scenario: Option<PathBuf>,
    pub epsilon: f64,
    /// `year,lambda2` CSV used in place of networks built from a panel.
    pub series: Option<PathBuf>,
    pub placebo_years: Vec<i32>,
    /// Year to stress; defaults to the last panel year.
    pub year: Option<i32>,
    /// Edge-list CSV to stress instead of a panel year.
    pub edges: Option<PathBuf>,
    pub eigenvectors: bool,
    /// Synthesis manifest; the built-in calibration when absent.
    pub manifest: Option<PathBuf>,
    pub seed: u64,
}

pub const DEFAULT_TREATMENT_YEAR: i32 = 2020;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            out: PathBuf::from("out"),
            method: AllocationMethod::Equal,
            pre_years: Vec::new(),
            post_years: Vec::new(),
            treatment_year: DEFAULT_TREATMENT_YEAR,
            bootstrap: None,
            scenario: None,
            epsilon: (-1.0f64).exp(),
            series: None,
            placebo_years: Vec::new(),
            year: None,
            edges: None,
            eigenvectors: false,
            manifest: None,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.bootstrap {
            if b.replicates < MIN_REPLICATES {
                return Err(CliError::Config(format!(
                    "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
                    b.replicates
                )));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CliError::Config(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.pre_years.is_empty() != self.post_years.is_empty() {
            return Err(CliError::Config("--pre-years and --post-years go together".into()));
        }
        Ok(())
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("--input is required".into()))
    }

    /// Creates the output directory and checks it accepts files.
    pub fn prepare_out(&self) -> Result<&Path> {
        let out = self.out.as_path();
        std::fs::create_dir_all(out).map_err(|source| CliError::Io {
            path: out.to_path_buf(),
            source,
        })?;
        let meta = std::fs::metadata(out).map_err(|source| CliError::Io {
            path: out.to_path_buf(),
            source,
        })?;
        if meta.permissions().readonly() {
            return Err(CliError::Config(format!(
                "output directory {} is read-only",
                out.display()
            )));
        }
        Ok(out)
    }
}
