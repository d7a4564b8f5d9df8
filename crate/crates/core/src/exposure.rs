//! Bank-level exposure panels: the raw input of the pipeline.
//!
//! A panel holds, for each supervisory exercise year, one [`BankRecord`] per
//! bank with its balance-sheet size and its exposures aggregated by
//! counterparty country. Panels are read from and written to a flat CSV with
//! one row per (bank, counterparty country) pair:
//!
//! ```text
//! year,lei,name,country,total_assets,capital,exposure_country,exposure_amount
//! ```
//!
//! Bank-level fields are repeated on every row of the bank. A bank without
//! any exposure is written as a single row with the last two cells empty.
//! Amounts are million EUR.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt17;

pub const CSV_HEADER: [&str; 8] = [
    "year",
    "lei",
    "name",
    "country",
    "total_assets",
    "capital",
    "exposure_country",
    "exposure_amount",
];

/// Country codes expected in European supervisory disclosures (EEA, UK, CH).
/// Anything else is kept but reported as a warning.
pub const KNOWN_COUNTRIES: [&str; 32] = [
    "AT", "BE", "BG", "CH", "CY", "CZ", "DE", "DK", "EE", "ES", "FI", "FR", "GB", "GR", "HR", "HU", "IE", "IS", "IT",
    "LI", "LT", "LU", "LV", "MT", "NL", "NO", "PL", "PT", "RO", "SE", "SI", "SK",
];

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate LEI {lei} in year {year}")]
    DuplicateLei { line: u64, year: i32, lei: String },
    #[error("line {line}, column {column}: negative value {value}")]
    Negative {
        line: u64,
        column: &'static str,
        value: f64,
    },
    #[error("year {year} has {count} bank(s); a network needs at least 2")]
    TooFewBanks { year: i32, count: usize },
    #[error("infeasible synthesis spec: {0}")]
    InfeasibleSpec(String),
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("panel has no years")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PanelError>;

/// One bank in one exercise year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankRecord {
    pub lei: String,
    pub name: String,
    pub country: String,
    pub total_assets: f64,
    pub capital: f64,
    /// Exposure by counterparty country, million EUR.
    pub exposures: BTreeMap<String, f64>,
}

impl BankRecord {
    /// Sum of all country exposures.
    pub fn total_exposure(&self) -> f64 {
        self.exposures.values().sum()
    }

    pub fn exposure_to(&self, country: &str) -> f64 {
        self.exposures.get(country).copied().unwrap_or(0.0)
    }
}

/// Bank records grouped by exercise year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposurePanel {
    years: Vec<i32>,
    records: BTreeMap<i32, Vec<BankRecord>>,
}

impl ExposurePanel {
    /// Builds a panel, checking that every year has at least two banks with
    /// unique LEIs and non-negative amounts.
    pub fn new(records: BTreeMap<i32, Vec<BankRecord>>) -> Result<Self> {
        if records.is_empty() {
            return Err(PanelError::Empty);
        }
        for (&year, banks) in &records {
            if banks.len() < 2 {
                return Err(PanelError::TooFewBanks {
                    year,
                    count: banks.len(),
                });
            }
            let mut seen = HashSet::new();
            for b in banks {
                if !seen.insert(b.lei.as_str()) {
                    return Err(PanelError::DuplicateLei {
                        line: 0,
                        year,
                        lei: b.lei.clone(),
                    });
                }
                for (column, value) in [("total_assets", b.total_assets), ("capital", b.capital)]
                    .into_iter()
                    .chain(b.exposures.values().map(|&v| ("exposure_amount", v)))
                {
                    if !(value >= 0.0) || !value.is_finite() {
                        return Err(PanelError::Negative { line: 0, column, value });
                    }
                }
            }
        }
        Ok(ExposurePanel {
            years: records.keys().copied().collect(),
            records,
        })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn year(&self, year: i32) -> Option<&[BankRecord]> {
        self.records.get(&year).map(Vec::as_slice)
    }

    pub fn records(&self) -> &BTreeMap<i32, Vec<BankRecord>> {
        &self.records
    }

    /// Total exposure summed over banks and countries in `year`.
    pub fn total_exposure(&self, year: i32) -> f64 {
        self.year(year)
            .map(|rs| rs.iter().map(BankRecord::total_exposure).sum())
            .unwrap_or(0.0)
    }
}

/// Non-fatal findings while reading a panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelWarning {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: ExposurePanel,
    pub warnings: Vec<PanelWarning>,
}

/// Reads and validates a panel CSV. Warnings are logged.
pub fn load_panel(path: impl AsRef<Path>) -> Result<ExposurePanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let loaded = read_panel(file)?;
    for w in &loaded.warnings {
        log::warn!("{}: line {}: {}", path.display(), w.line, w.message);
    }
    Ok(loaded.panel)
}

fn is_country_code(s: &str) -> bool {
    s.len() == 2 && s.bytes().all(|b| b.is_ascii_uppercase())
}

fn is_lei(s: &str) -> bool {
    s.len() == 20 && s.bytes().all(|b| b.is_ascii_alphanumeric())
}

fn parse_amount(raw: &str, line: u64, column: &'static str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| PanelError::Parse {
        line,
        message: format!("column {column}: cannot parse {raw:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(PanelError::Parse {
            line,
            message: format!("column {column}: non-finite value {raw:?}"),
        });
    }
    if value < 0.0 {
        return Err(PanelError::Negative { line, column, value });
    }
    Ok(value)
}

/// Reads a panel from any CSV source, returning warnings instead of logging.
pub fn read_panel<R: Read>(reader: R) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != CSV_HEADER {
        return Err(PanelError::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), got.join(",")),
        });
    }

    let mut warnings = Vec::new();
    let mut records: BTreeMap<i32, Vec<BankRecord>> = BTreeMap::new();
    // (year, lei) blocks already closed; a reappearing LEI is a duplicate
    let mut closed: HashSet<(i32, String)> = HashSet::new();
    let mut current: Option<(i32, BankRecord)> = None;
    let mut warned_countries: BTreeSet<String> = BTreeSet::new();

    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != CSV_HEADER.len() {
            return Err(PanelError::Parse {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), row.len()),
            });
        }
        let year: i32 = row[0].parse().map_err(|_| PanelError::Parse {
            line,
            message: format!("column year: cannot parse {:?} as an integer", &row[0]),
        })?;
        let lei = row[1].to_string();
        if !is_lei(&lei) {
            return Err(PanelError::Parse {
                line,
                message: format!("column lei: {lei:?} is not a 20-character alphanumeric LEI"),
            });
        }
        let country = row[3].to_string();
        if !is_country_code(&country) {
            return Err(PanelError::Parse {
                line,
                message: format!("column country: {country:?} is not a two-letter code"),
            });
        }
        let total_assets = parse_amount(&row[4], line, "total_assets")?;
        let capital = parse_amount(&row[5], line, "capital")?;
        let exposure_country = row[6].to_string();
        let amount_raw = &row[7];

        let fresh = BankRecord {
            lei: lei.clone(),
            name: row[2].to_string(),
            country: country.clone(),
            total_assets,
            capital,
            exposures: BTreeMap::new(),
        };

        let same_block = matches!(&current, Some((y, r)) if *y == year && r.lei == lei);
        if !same_block {
            if let Some((y, r)) = current.take() {
                closed.insert((y, r.lei.clone()));
                records.entry(y).or_default().push(r);
            }
            if closed.contains(&(year, lei.clone())) {
                return Err(PanelError::DuplicateLei { line, year, lei });
            }
            for c in [&country] {
                if !KNOWN_COUNTRIES.contains(&c.as_str()) && warned_countries.insert(c.clone()) {
                    warnings.push(PanelWarning {
                        line,
                        message: format!("unknown country code {c}, kept"),
                    });
                }
            }
            current = Some((year, fresh));
        } else if let Some((_, r)) = &current {
            if r.name != fresh.name
                || r.country != fresh.country
                || r.total_assets != fresh.total_assets
                || r.capital != fresh.capital
            {
                // Conflicting bank-level fields: two different banks share the LEI.
                return Err(PanelError::DuplicateLei { line, year, lei });
            }
        }

        let (_, rec) = current.as_mut().expect("block opened above");
        if exposure_country.is_empty() && amount_raw.is_empty() {
            continue;
        }
        if !is_country_code(&exposure_country) {
            return Err(PanelError::Parse {
                line,
                message: format!("column exposure_country: {exposure_country:?} is not a two-letter code"),
            });
        }
        if !KNOWN_COUNTRIES.contains(&exposure_country.as_str()) && warned_countries.insert(exposure_country.clone()) {
            warnings.push(PanelWarning {
                line,
                message: format!("unknown country code {exposure_country}, kept"),
            });
        }
        let amount = parse_amount(amount_raw, line, "exposure_amount")?;
        if rec.exposures.insert(exposure_country.clone(), amount).is_some() {
            return Err(PanelError::Parse {
                line,
                message: format!("bank {lei} lists exposure to {exposure_country} twice in {year}"),
            });
        }
    }
    if let Some((y, r)) = current.take() {
        records.entry(y).or_default().push(r);
    }
    Ok(LoadedPanel {
        panel: ExposurePanel::new(records)?,
        warnings,
    })
}

/// Writes a panel in the CSV schema; amounts carry 17 significant digits.
pub fn write_panel<W: Write>(panel: &ExposurePanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for (&year, banks) in panel.records() {
        for b in banks {
            let year_s = year.to_string();
            let assets = fmt17(b.total_assets);
            let capital = fmt17(b.capital);
            let prefix = [
                year_s.as_str(),
                b.lei.as_str(),
                b.name.as_str(),
                b.country.as_str(),
                assets.as_str(),
                capital.as_str(),
            ];
            if b.exposures.is_empty() {
                let mut row = prefix.to_vec();
                row.extend(["", ""]);
                w.write_record(&row)?;
            }
            for (c, &amount) in &b.exposures {
                let a = fmt17(amount);
                let mut row = prefix.to_vec();
                row.extend([c.as_str(), a.as_str()]);
                w.write_record(&row)?;
            }
        }
    }
    w.flush().map_err(|source| PanelError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_panel(panel: &ExposurePanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_panel(panel, std::io::BufWriter::new(file))
}

/// Per-year entry of a panel manifest / synthesis spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSpec {
    pub year: i32,
    pub n_banks: usize,
    /// Total exposure, million EUR. Required for synthesis only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_exposure: Option<f64>,
    /// Domicile countries to draw from. Required for synthesis only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub countries: Vec<String>,
    /// Cross-sectional standard deviation of per-bank exposure (million EUR);
    /// sets the log-normal dispersion of synthetic banks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_sd: Option<f64>,
}

/// Companion JSON manifest; doubles as the input of [`synthesize_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelManifest {
    pub years: Vec<YearSpec>,
    /// Number of banks (same LEI) present in every synthesized year.
    #[serde(default)]
    pub persistent_banks: usize,
}

impl PanelManifest {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|source| PanelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }

    /// Checks a loaded panel against the manifest's years and bank counts.
    pub fn validate(&self, panel: &ExposurePanel) -> Result<()> {
        let expected: Vec<i32> = self.years.iter().map(|y| y.year).collect();
        if expected != panel.years() {
            return Err(PanelError::Manifest(format!(
                "years {:?} in manifest, {:?} in panel",
                expected,
                panel.years()
            )));
        }
        for y in &self.years {
            let got = panel.year(y.year).map_or(0, <[_]>::len);
            if got != y.n_banks {
                return Err(PanelError::Manifest(format!(
                    "year {}: manifest expects {} banks, panel has {got}",
                    y.year, y.n_banks
                )));
            }
        }
        Ok(())
    }

    /// Sample composition of the 2014–2023 exercises: bank counts, total
    /// exposure and exposure dispersion per year.
    pub fn eba_calibration() -> Self {
        let roster = [
            "DE", "FR", "IT", "ES", "NL", "BE", "AT", "IE", "PT", "GR", "SE", "DK", "FI", "NO", "PL",
        ];
        let rows: [(i32, usize, usize, f64, f64); 5] = [
            (2014, 61, 15, 79_317.0, 1_842.0),
            (2016, 37, 13, 64_202.0, 2_154.0),
            (2018, 30, 12, 57_202.0, 2_398.0),
            (2021, 31, 13, 58_978.0, 2_211.0),
            (2023, 33, 14, 68_403.0, 2_567.0),
        ];
        PanelManifest {
            years: rows
                .iter()
                .map(|&(year, n, k, e, sd)| YearSpec {
                    year,
                    n_banks: n,
                    total_exposure: Some(e),
                    countries: roster[..k].iter().map(|c| c.to_string()).collect(),
                    exposure_sd: Some(sd),
                })
                .collect(),
            persistent_banks: 0,
        }
    }
}

const LEI_ALPHABET: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

fn random_lei(rng: &mut ChaCha8Rng) -> String {
    (0..20)
        .map(|_| LEI_ALPHABET[rng.random_range(0..LEI_ALPHABET.len())] as char)
        .collect()
}

/// Default log-normal σ for per-bank exposure when a year gives no dispersion.
const DEFAULT_SIGMA: f64 = 1.0;

/// Generates a synthetic panel matching the manifest's bank counts and totals.
///
/// Each bank is domiciled in one of the year's countries (every used country
/// gets at least two banks, so own-country exposure always has a
/// counterparty) and holds a positive exposure to every domicile country in
/// the sample, giving complete reconstructed networks. Bank scale is
/// log-normal with σ taken from the year's coefficient of variation; the
/// exposures are rescaled so the year total matches exactly.
pub fn synthesize_panel(spec: &PanelManifest, seed: u64) -> Result<ExposurePanel> {
    if spec.years.is_empty() {
        return Err(PanelError::InfeasibleSpec("no years".into()));
    }
    let min_n = spec.years.iter().map(|y| y.n_banks).min().unwrap_or(0);
    if spec.persistent_banks > min_n {
        return Err(PanelError::InfeasibleSpec(format!(
            "{} persistent banks but a year has only {min_n}",
            spec.persistent_banks
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Identities of the persistent banks, shared by every year.
    let mut used_leis = HashSet::new();
    let persistent: Vec<String> = (0..spec.persistent_banks)
        .map(|_| loop {
            let lei = random_lei(&mut rng);
            if used_leis.insert(lei.clone()) {
                break lei;
            }
        })
        .collect();

    let mut records = BTreeMap::new();
    let mut years_seen = BTreeSet::new();
    for ys in &spec.years {
        if !years_seen.insert(ys.year) {
            return Err(PanelError::InfeasibleSpec(format!("year {} listed twice", ys.year)));
        }
        if ys.n_banks < 2 {
            return Err(PanelError::InfeasibleSpec(format!(
                "year {}: n_banks = {} < 2",
                ys.year, ys.n_banks
            )));
        }
        let total = ys
            .total_exposure
            .ok_or_else(|| PanelError::InfeasibleSpec(format!("year {}: total_exposure missing", ys.year)))?;
        if !(total > 0.0) || !total.is_finite() {
            return Err(PanelError::InfeasibleSpec(format!(
                "year {}: total_exposure must be positive",
                ys.year
            )));
        }
        let roster: Vec<String> = if ys.countries.is_empty() {
            vec!["DE".into(), "FR".into()]
        } else {
            ys.countries.clone()
        };
        let n = ys.n_banks;
        let k = roster.len().min(n / 2).max(1);

        let sigma = match ys.exposure_sd {
            Some(sd) if sd > 0.0 => {
                let cv = sd / (total / n as f64);
                (1.0 + cv * cv).ln().sqrt()
            }
            _ => DEFAULT_SIGMA,
        };
        let scale = LogNormal::new(0.0, sigma).expect("finite sigma");
        let mix = LogNormal::new(0.0, 0.5).expect("finite sigma");
        // Country shares follow how many sample banks each country hosts.
        let country_weight: Vec<f64> = (0..k).map(|c| (n - c).div_ceil(k) as f64).collect();

        let mut banks: Vec<BankRecord> = Vec::with_capacity(n);
        let mut year_leis: HashSet<String> = persistent.iter().cloned().collect();
        for i in 0..n {
            let lei = if i < persistent.len() {
                persistent[i].clone()
            } else {
                loop {
                    let lei = random_lei(&mut rng);
                    if !used_leis.contains(&lei) && year_leis.insert(lei.clone()) {
                        break lei;
                    }
                }
            };
            // Round-robin domicile keeps at least two banks per used country.
            let home = roster[i % k].clone();
            let size = scale.sample(&mut rng);
            let mut exposures = BTreeMap::new();
            for (c, country) in roster[..k].iter().enumerate() {
                let noise: f64 = mix.sample(&mut rng);
                exposures.insert(country.clone(), size * country_weight[c] * noise);
            }
            banks.push(BankRecord {
                name: format!("Synthetic Bank {:02} ({})", i + 1, ys.year),
                lei,
                country: home,
                total_assets: 0.0,
                capital: 0.0,
                exposures,
            });
        }

        let raw: f64 = banks.iter().map(BankRecord::total_exposure).sum();
        let factor = total / raw;
        for b in &mut banks {
            for v in b.exposures.values_mut() {
                *v *= factor;
            }
        }
        // Absorb the rescaling residue into the largest cell so the year
        // total is exact up to the final rounding.
        let residue = total - banks.iter().map(BankRecord::total_exposure).sum::<f64>();
        if let Some(cell) = banks
            .iter_mut()
            .flat_map(|b| b.exposures.values_mut())
            .max_by(|a, b| a.total_cmp(b))
        {
            *cell += residue;
        }
        for b in &mut banks {
            let cross_border = b.total_exposure();
            b.total_assets = cross_border * rng.random_range(8.0..25.0);
            b.capital = b.total_assets * rng.random_range(0.04..0.09);
        }
        records.insert(ys.year, banks);
    }
    ExposurePanel::new(records)
}
