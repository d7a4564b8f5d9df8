//! Reconstruction of bilateral exposure networks from country aggregates.
//!
//! A bank's exposure to country `c` is spread over the sample banks
//! domiciled in `c` (equally, by total assets, or by cross-border portfolio),
//! giving a directed matrix ŵ that is then averaged with its transpose.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exposure::BankRecord;
use crate::fmt17;

/// Relative tolerance for conservation checks.
pub const CONSERVATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("a network needs at least 2 banks, got {0}")]
    TooFewBanks(usize),
    #[error("bank {0} has non-positive total assets; size-weighted allocation needs assets > 0")]
    NonPositiveAssets(String),
    #[error("bank {0} has no cross-border exposure; exposure-weighted allocation needs a positive portfolio")]
    NonPositivePortfolio(String),
    #[error("zero weight denominator allocating {lei}'s exposure to {country}")]
    ZeroDenominator { lei: String, country: String },
    #[error("bank lists differ: {0}")]
    BankMismatch(String),
    #[error("invalid weight matrix: {0}")]
    InvalidMatrix(String),
    #[error("unknown bank {0}")]
    UnknownBank(String),
    #[error("malformed edge list: {0}")]
    EdgeList(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMethod {
    Equal,
    SizeWeighted,
    ExposureWeighted,
}

impl AllocationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AllocationMethod::Equal => "equal",
            AllocationMethod::SizeWeighted => "size",
            AllocationMethod::ExposureWeighted => "exposure",
        }
    }
}

impl FromStr for AllocationMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "equal" => Ok(AllocationMethod::Equal),
            "size" | "size_weighted" => Ok(AllocationMethod::SizeWeighted),
            "exposure" | "exposure_weighted" => Ok(AllocationMethod::ExposureWeighted),
            other => Err(format!("unknown allocation method {other:?} (equal|size|exposure)")),
        }
    }
}

/// Country exposure that found no counterparty in the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedExposure {
    pub node: usize,
    pub lei: String,
    pub country: String,
    pub amount: f64,
}

/// Directed bilateral estimates ŵ, entry (i, j) = exposure of i to j.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedExposureMatrix {
    pub banks: Vec<String>,
    pub entries: DMatrix<f64>,
    pub dropped: Vec<DroppedExposure>,
}

impl DirectedExposureMatrix {
    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }
}

/// Node labels for a record list: the LEI, with `#k` appended to the k-th
/// repeat of a LEI (bootstrap draws).
pub fn node_labels(records: &[BankRecord]) -> Vec<String> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    records
        .iter()
        .map(|r| {
            let k = seen.entry(r.lei.as_str()).or_insert(0);
            *k += 1;
            if *k == 1 {
                r.lei.clone()
            } else {
                format!("{}#{}", r.lei, k)
            }
        })
        .collect()
}

/// Allocates every bank's country exposures over the banks of that country.
///
/// Counterparties of bank `i` in country `c` are the records domiciled in
/// `c` whose LEI differs from `i`'s, so a bank never lends to itself (or to
/// a resampled copy of itself) and own-country exposure is shared among the
/// other domestic banks. Exposure with no eligible counterparty is dropped
/// and reported in [`DirectedExposureMatrix::dropped`].
pub fn allocate(records: &[BankRecord], method: AllocationMethod) -> Result<DirectedExposureMatrix> {
    let n = records.len();
    if n < 2 {
        return Err(NetworkError::TooFewBanks(n));
    }
    let portfolio: Vec<f64> = records.iter().map(BankRecord::total_exposure).collect();
    match method {
        AllocationMethod::SizeWeighted => {
            if let Some(r) = records.iter().find(|r| !(r.total_assets > 0.0)) {
                return Err(NetworkError::NonPositiveAssets(r.lei.clone()));
            }
        }
        AllocationMethod::ExposureWeighted => {
            if let Some((r, _)) = records.iter().zip(&portfolio).find(|(_, &p)| !(p > 0.0)) {
                return Err(NetworkError::NonPositivePortfolio(r.lei.clone()));
            }
        }
        AllocationMethod::Equal => {}
    }
    let score = |j: usize| -> f64 {
        match method {
            AllocationMethod::Equal => 1.0,
            AllocationMethod::SizeWeighted => records[j].total_assets,
            AllocationMethod::ExposureWeighted => portfolio[j],
        }
    };

    let mut by_country: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, r) in records.iter().enumerate() {
        by_country.entry(r.country.as_str()).or_default().push(j);
    }

    let mut entries = DMatrix::zeros(n, n);
    let mut dropped = Vec::new();
    for (i, bank) in records.iter().enumerate() {
        for (country, &amount) in &bank.exposures {
            if amount == 0.0 {
                continue;
            }
            let eligible: Vec<usize> = by_country
                .get(country.as_str())
                .map(|js| js.iter().copied().filter(|&j| records[j].lei != bank.lei).collect())
                .unwrap_or_default();
            if eligible.is_empty() {
                log::debug!(
                    "{}: exposure {} to {} has no counterparty bank in the sample, dropped",
                    bank.lei,
                    amount,
                    country
                );
                dropped.push(DroppedExposure {
                    node: i,
                    lei: bank.lei.clone(),
                    country: country.clone(),
                    amount,
                });
                continue;
            }
            let denom: f64 = eligible.iter().map(|&j| score(j)).sum();
            if !(denom > 0.0) {
                return Err(NetworkError::ZeroDenominator {
                    lei: bank.lei.clone(),
                    country: country.clone(),
                });
            }
            for &j in &eligible {
                entries[(i, j)] += amount * score(j) / denom;
            }
        }
    }
    Ok(DirectedExposureMatrix {
        banks: node_labels(records),
        entries,
        dropped,
    })
}

/// Undirected exposure network with symmetric, zero-diagonal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    banks: Vec<String>,
    weights: DMatrix<f64>,
    year: i32,
}

impl WeightedGraph {
    pub fn new(banks: Vec<String>, weights: DMatrix<f64>, year: i32) -> Result<Self> {
        let n = banks.len();
        if weights.nrows() != n || weights.ncols() != n {
            return Err(NetworkError::InvalidMatrix(format!(
                "{}x{} weights for {n} banks",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(NetworkError::InvalidMatrix(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                let w = weights[(i, j)];
                if w != weights[(j, i)] {
                    return Err(NetworkError::InvalidMatrix(format!("asymmetric at ({i}, {j})")));
                }
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(NetworkError::InvalidMatrix(format!("weight {w} at ({i}, {j})")));
                }
            }
        }
        Ok(WeightedGraph { banks, weights, year })
    }

    /// Builds a graph from an upper-triangle edge list.
    pub fn from_edges(banks: Vec<String>, edges: &[(usize, usize, f64)], year: i32) -> Result<Self> {
        let n = banks.len();
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, x) in edges {
            if i >= n || j >= n || i == j {
                return Err(NetworkError::InvalidMatrix(format!("bad edge ({i}, {j})")));
            }
            w[(i, j)] = x;
            w[(j, i)] = x;
        }
        Self::new(banks, w, year)
    }

    /// Uniform complete graph on `n` nodes labelled `{prefix}{k}`.
    pub fn complete(prefix: &str, n: usize, weight: f64) -> Self {
        let banks = (0..n).map(|k| format!("{prefix}{k}")).collect();
        let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { weight });
        WeightedGraph {
            banks,
            weights: w,
            year: 0,
        }
    }

    pub fn banks(&self) -> &[String] {
        &self.banks
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn n(&self) -> usize {
        self.banks.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn index_of(&self, bank: &str) -> Option<usize> {
        self.banks.iter().position(|b| b == bank)
    }

    /// Weighted degrees d_i = Σ_j w_ij.
    pub fn degrees(&self) -> Vec<f64> {
        self.weights.row_iter().map(|r| r.sum()).collect()
    }

    /// Σ over all ordered pairs, i.e. twice the undirected edge total.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Node-induced subgraph on `keep` (indices, in the given order).
    pub fn induced(&self, keep: &[usize]) -> WeightedGraph {
        let m = keep.len();
        let w = DMatrix::from_fn(m, m, |a, b| self.weights[(keep[a], keep[b])]);
        WeightedGraph {
            banks: keep.iter().map(|&k| self.banks[k].clone()).collect(),
            weights: w,
            year: self.year,
        }
    }

    /// Graph with node `idx` and its edges removed.
    pub fn without(&self, idx: usize) -> WeightedGraph {
        let keep: Vec<usize> = (0..self.n()).filter(|&k| k != idx).collect();
        self.induced(&keep)
    }

    pub fn with_year(mut self, year: i32) -> Self {
        self.year = year;
        self
    }

    /// Sets w_ij = w_ji = value. Panics on a diagonal index.
    pub fn set_weight(&mut self, i: usize, j: usize, value: f64) {
        assert!(i != j, "self-loops are not allowed");
        self.weights[(i, j)] = value;
        self.weights[(j, i)] = value;
    }

    /// Writes `year,bank_i,bank_j,weight` for every pair i < j.
    pub fn write_edge_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["year", "bank_i", "bank_j", "weight"])?;
        let year = self.year.to_string();
        for i in 0..self.n() {
            for j in (i + 1)..self.n() {
                w.write_record([
                    year.as_str(),
                    self.banks[i].as_str(),
                    self.banks[j].as_str(),
                    fmt17(self.weights[(i, j)]).as_str(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads an edge list written by [`Self::write_edge_csv`]. Bank order is
    /// recovered from first appearance, which matches the writer's row order.
    pub fn read_edge_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut banks: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut year = None;
        for row in rdr.records() {
            let row = row?;
            if row.len() != 4 {
                return Err(NetworkError::EdgeList(format!("expected 4 fields, got {}", row.len())));
            }
            let y: i32 = row[0]
                .parse()
                .map_err(|_| NetworkError::EdgeList(format!("bad year {:?}", &row[0])))?;
            if *year.get_or_insert(y) != y {
                return Err(NetworkError::EdgeList("mixed years in one edge list".into()));
            }
            let mut idx = |name: &str| -> usize {
                *index.entry(name.to_string()).or_insert_with(|| {
                    banks.push(name.to_string());
                    banks.len() - 1
                })
            };
            let i = idx(&row[1]);
            let j = idx(&row[2]);
            let w: f64 = row[3]
                .parse()
                .map_err(|_| NetworkError::EdgeList(format!("bad weight {:?}", &row[3])))?;
            edges.push((i, j, w));
        }
        if banks.len() < 2 {
            return Err(NetworkError::TooFewBanks(banks.len()));
        }
        Self::from_edges(banks, &edges, year.unwrap_or(0))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GraphDocument {
            year: self.year,
            banks: self.banks.clone(),
            weights: self.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: GraphDocument = serde_json::from_str(s)?;
        let n = doc.banks.len();
        if doc.weights.len() != n || doc.weights.iter().any(|r| r.len() != n) {
            return Err(NetworkError::InvalidMatrix(
                "adjacency shape does not match bank list".into(),
            ));
        }
        let w = DMatrix::from_fn(n, n, |i, j| doc.weights[i][j]);
        Self::new(doc.banks, w, doc.year)
    }
}

/// JSON adjacency document.
#[derive(Debug, Serialize, Deserialize)]
struct GraphDocument {
    year: i32,
    banks: Vec<String>,
    weights: Vec<Vec<f64>>,
}

/// w_ij = (ŵ_ij + ŵ_ji) / 2, with the diagonal forced to zero.
pub fn symmetrize(directed: &DirectedExposureMatrix) -> WeightedGraph {
    let n = directed.banks.len();
    let e = &directed.entries;
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (e[(i, j)] + e[(j, i)]);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    WeightedGraph {
        banks: directed.banks.clone(),
        weights: w,
        year: 0,
    }
}

/// Convenience: allocate, symmetrize and tag with `year`.
pub fn build_network(records: &[BankRecord], method: AllocationMethod, year: i32) -> Result<WeightedGraph> {
    let directed = allocate(records, method)?;
    Ok(symmetrize(&directed).with_year(year))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankDiscrepancy {
    pub bank: String,
    pub expected: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub directed_total: f64,
    pub undirected_total: f64,
    /// undirected − directed.
    pub total_discrepancy: f64,
    pub total_conserved: bool,
    pub bank_failures: Vec<BankDiscrepancy>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.total_conserved && self.bank_failures.is_empty()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSERVATION_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Checks total-weight conservation and per-bank row sums against the
/// disclosed country exposures (net of dropped remainders).
pub fn validate_conservation(
    graph: &WeightedGraph,
    directed: &DirectedExposureMatrix,
    records: &[BankRecord],
) -> Result<ValidationReport> {
    if graph.banks != directed.banks {
        return Err(NetworkError::BankMismatch(
            "graph and directed matrix order differ".into(),
        ));
    }
    if records.len() != directed.banks.len() {
        return Err(NetworkError::BankMismatch(format!(
            "{} records for {} nodes",
            records.len(),
            directed.banks.len()
        )));
    }
    for (r, label) in records.iter().zip(&directed.banks) {
        if label.split('#').next() != Some(r.lei.as_str()) {
            return Err(NetworkError::BankMismatch(format!("record {} vs node {label}", r.lei)));
        }
    }

    let directed_total = directed.total();
    let undirected_total = graph.total_weight();
    let total_discrepancy = undirected_total - directed_total;
    let total_conserved = close(undirected_total, directed_total);

    let mut dropped_by_node = vec![0.0; records.len()];
    let mut warnings = Vec::new();
    for d in &directed.dropped {
        dropped_by_node[d.node] += d.amount;
        warnings.push(format!(
            "{}: exposure {} to {} dropped (no counterparty in sample)",
            d.lei, d.amount, d.country
        ));
    }
    let bank_failures = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let expected = r.total_exposure() - dropped_by_node[i];
            let actual: f64 = directed.entries.row(i).sum();
            (!close(expected, actual)).then(|| BankDiscrepancy {
                bank: directed.banks[i].clone(),
                expected,
                actual,
            })
        })
        .collect();
    if !total_conserved {
        warnings.push(format!(
            "total weight discrepancy {total_discrepancy} (undirected {undirected_total} vs directed {directed_total})"
        ));
    }
    Ok(ValidationReport {
        directed_total,
        undirected_total,
        total_discrepancy,
        total_conserved,
        bank_failures,
        warnings,
    })
}

/// Descriptive statistics of a network. `total_weight` sums each undirected
/// edge once; edge statistics cover strictly positive weights only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub year: i32,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub possible_edges: usize,
    pub density: f64,
    pub total_weight: f64,
    pub mean_weight: f64,
    pub sd_weight: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    pub degrees: Vec<f64>,
    pub mean_degree: f64,
    pub sd_degree: f64,
    pub min_degree: f64,
    pub max_degree: f64,
}

/// Mean and sample standard deviation.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn network_stats(graph: &WeightedGraph) -> NetworkStats {
    let n = graph.n();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = graph.weight(i, j);
            total += w;
            if w > 0.0 {
                edges.push(w);
            }
        }
    }
    let possible = n * n.saturating_sub(1) / 2;
    let (mean_weight, sd_weight) = mean_sd(&edges);
    let degrees = graph.degrees();
    let (_, sd_degree) = mean_sd(&degrees);
    let fold = |init: f64, f: fn(f64, f64) -> f64, xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().copied().fold(init, f)
        }
    };
    NetworkStats {
        year: graph.year(),
        n_nodes: n,
        n_edges: edges.len(),
        possible_edges: possible,
        density: if possible == 0 {
            0.0
        } else {
            edges.len() as f64 / possible as f64
        },
        total_weight: total,
        mean_weight,
        sd_weight,
        min_weight: fold(f64::INFINITY, f64::min, &edges),
        max_weight: fold(f64::NEG_INFINITY, f64::max, &edges),
        mean_degree: if n == 0 { 0.0 } else { 2.0 * total / n as f64 },
        sd_degree,
        min_degree: fold(f64::INFINITY, f64::min, &degrees),
        max_degree: fold(f64::NEG_INFINITY, f64::max, &degrees),
        degrees,
    }
}
