//! CSV and JSON output files. Column orders are fixed; numbers use the
//! shortest representation that round-trips, empty cells mean "not defined".

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Table {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn create(path: impl AsRef<Path>, header: &[&str]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let mut table = Table {
            writer: csv::Writer::from_writer(BufWriter::new(file)),
            path,
        };
        table.row(header.iter().map(|s| s.to_string()))?;
        Ok(table)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.writer.write_record(&fields).map_err(|source| CliError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().map_err(|source| CliError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(self.path)
    }
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<PathBuf> {
    let path = path.as_ref().to_path_buf();
    let mut f = File::create(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    Ok(path)
}

pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, what: &'static str, value: &T) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json { what, source })?;
    write_text(path, &text)
}

/// Column orders of every table the CLI writes.
pub mod columns {
    pub const NETWORK_STATS: &[&str] = &[
        "year",
        "n_nodes",
        "n_edges",
        "density_pct",
        "total_weight",
        "mean_weight",
        "sd_weight",
        "min_weight",
        "max_weight",
        "mean_degree",
        "sd_degree",
        "min_degree",
        "max_degree",
    ];
    pub const METRICS: &[&str] = &[
        "year",
        "n",
        "connected",
        "lambda2",
        "inv_lambda2_e3",
        "spectral_gap",
        "lambda3",
        "lambda_max",
        "radius_ratio",
        "effective_resistance",
        "normalized_lambda2",
        "avg_resistance_distance",
        "mixing_time",
    ];
    pub const CENTRALITY: &[&str] = &["year", "bank", "centrality", "rank"];
    pub const DID: &[&str] = &[
        "period",
        "lambda2",
        "effect",
        "pct_change",
        "ci_lower",
        "ci_upper",
        "p_value",
    ];
    pub const DETRENDED: &[&str] = &["period", "lambda2", "counterfactual", "effect", "pct_change"];
    pub const PLACEBO: &[&str] = &["false_year", "period", "lambda2", "baseline", "effect", "pct_change"];
    pub const SUBPERIODS: &[&str] = &[
        "from",
        "to",
        "lambda2_from",
        "lambda2_to",
        "change",
        "pct_change",
        "annualized_pct",
    ];
    pub const STRESS_SUMMARY: &[&str] = &[
        "failures",
        "rounds",
        "stabilization_time",
        "total_loss",
        "pre_lambda2",
        "post_lambda2",
        "delta_lambda2",
    ];
    pub const STRESS_PATHS: &[&str] = &["time", "bank", "distress"];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [1719.2933333333332, 0.1, -3.5e-12, 1e300] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(-0.0), "0");
        assert_eq!(opt(None), "");
    }
}
