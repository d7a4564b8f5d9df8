//! Treatment-effect estimation on a yearly λ₂ series.
//!
//! Two specifications are supported. The level specification compares each
//! post-treatment year with the mean of the pre-treatment years; the
//! detrended specification compares it with a linear trend fitted to the
//! pre-treatment years only. Uncertainty comes from a bootstrap that
//! resamples banks within each year and rebuilds every network.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exposure::{BankRecord, ExposurePanel, PanelError};
use crate::network::{build_network, AllocationMethod, NetworkError, NetworkStats, WeightedGraph};
use crate::spectral::{algebraic_connectivity, spectral_centralities, SpectralError};

/// Redraws allowed for a year whose resample holds fewer than two distinct banks.
pub const MAX_RESAMPLE_RETRIES: usize = 100;

/// Smallest accepted bootstrap size.
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("pre-treatment period is empty")]
    EmptyPre,
    #[error("post-treatment period is empty")]
    EmptyPost,
    #[error("year {0} is in both the pre- and post-treatment periods")]
    Overlap(i32),
    #[error("year {0} appears more than once")]
    DuplicateYear(i32),
    #[error("year {0} has an observation but is in neither period")]
    Unassigned(i32),
    #[error("year {0} has no observation")]
    MissingYear(i32),
    #[error("need at least {needed} points with distinct years, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("all years are identical; the trend is not identified")]
    IdenticalYears,
    #[error("false treatment year {year} must split the pre-period {pre:?}")]
    PlaceboOutsidePre { year: i32, pre: Vec<i32> },
    #[error("bootstrap needs at least {MIN_REPLICATES} replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("year {year}: resample kept fewer than two distinct banks after {MAX_RESAMPLE_RETRIES} retries")]
    ResampleFailed { year: i32 },
    #[error("no bank is present in every year")]
    EmptyIntersection,
    #[error("unknown bank {0}")]
    UnknownBank(String),
    #[error("subgroup needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("snapshots have the same bank count {0}; elasticity undefined")]
    SameSize(usize),
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T> = std::result::Result<T, InferenceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Specification {
    Level,
    Detrended,
}

impl Specification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Specification::Level => "level",
            Specification::Detrended => "detrended",
        }
    }
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Specification {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "level" => Ok(Specification::Level),
            "detrended" => Ok(Specification::Detrended),
            other => Err(format!("unknown specification '{other}' (expected level or detrended)")),
        }
    }
}

/// Yearly λ₂ observations split into pre- and post-treatment years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragilitySeries {
    points: Vec<(i32, f64)>,
    pre_years: Vec<i32>,
    post_years: Vec<i32>,
}

impl FragilitySeries {
    pub fn new(mut points: Vec<(i32, f64)>, pre_years: &[i32], post_years: &[i32]) -> Result<Self> {
        points.sort_by_key(|p| p.0);
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(InferenceError::DuplicateYear(w[0].0));
            }
        }
        let pre: BTreeSet<i32> = pre_years.iter().copied().collect();
        let post: BTreeSet<i32> = post_years.iter().copied().collect();
        if pre.is_empty() {
            return Err(InferenceError::EmptyPre);
        }
        if post.is_empty() {
            return Err(InferenceError::EmptyPost);
        }
        if let Some(&y) = pre.intersection(&post).next() {
            return Err(InferenceError::Overlap(y));
        }
        let observed: BTreeSet<i32> = points.iter().map(|p| p.0).collect();
        if let Some(&y) = observed.iter().find(|y| !pre.contains(y) && !post.contains(y)) {
            return Err(InferenceError::Unassigned(y));
        }
        if let Some(&y) = pre.union(&post).find(|y| !observed.contains(y)) {
            return Err(InferenceError::MissingYear(y));
        }
        Ok(FragilitySeries {
            points,
            pre_years: pre.into_iter().collect(),
            post_years: post.into_iter().collect(),
        })
    }

    /// Years before `first_post` are pre-treatment, the rest post-treatment.
    pub fn split_at(points: Vec<(i32, f64)>, first_post: i32) -> Result<Self> {
        let pre: Vec<i32> = points.iter().map(|p| p.0).filter(|&y| y < first_post).collect();
        let post: Vec<i32> = points.iter().map(|p| p.0).filter(|&y| y >= first_post).collect();
        Self::new(points, &pre, &post)
    }

    pub fn points(&self) -> &[(i32, f64)] {
        &self.points
    }

    pub fn pre_years(&self) -> &[i32] {
        &self.pre_years
    }

    pub fn post_years(&self) -> &[i32] {
        &self.post_years
    }

    pub fn value(&self, year: i32) -> Option<f64> {
        self.points.iter().find(|p| p.0 == year).map(|p| p.1)
    }

    pub fn pre_points(&self) -> Vec<(i32, f64)> {
        self.points
            .iter()
            .copied()
            .filter(|p| self.pre_years.contains(&p.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub lambda2: f64,
    /// α for the level specification, the trend value for the detrended one.
    pub reference: f64,
    pub beta: f64,
    pub pct_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub gamma0: f64,
    pub gamma1: f64,
    pub r_squared: f64,
}

impl TrendFit {
    pub fn predict(&self, year: i32) -> f64 {
        self.gamma0 + self.gamma1 * year as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidEstimate {
    pub spec: Specification,
    /// Mean λ₂ over the pre-treatment years.
    pub baseline_alpha: f64,
    pub effects: BTreeMap<i32, Effect>,
    pub trend: Option<TrendFit>,
    pub counterfactuals: Option<BTreeMap<i32, f64>>,
}

impl DidEstimate {
    pub fn beta(&self, year: i32) -> Option<f64> {
        self.effects.get(&year).map(|e| e.beta)
    }
}

/// OLS of value on year via centred normal equations. R² is 0 for a flat
/// series.
pub fn ols_trend(points: &[(i32, f64)]) -> Result<TrendFit> {
    let distinct: BTreeSet<i32> = points.iter().map(|p| p.0).collect();
    if points.len() < 2 {
        return Err(InferenceError::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    if distinct.len() < 2 {
        return Err(InferenceError::IdenticalYears);
    }
    let n = points.len() as f64;
    let xbar = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - xbar).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - xbar) * (p.1 - ybar)).sum();
    let gamma1 = sxy / sxx;
    let gamma0 = ybar - gamma1 * xbar;
    let sst: f64 = points.iter().map(|p| (p.1 - ybar).powi(2)).sum();
    let r_squared = if sst == 0.0 {
        0.0
    } else {
        let ssr: f64 = points
            .iter()
            .map(|p| (p.1 - (gamma0 + gamma1 * p.0 as f64)).powi(2))
            .sum();
        1.0 - ssr / sst
    };
    Ok(TrendFit {
        gamma0,
        gamma1,
        r_squared,
    })
}

fn pre_mean(series: &FragilitySeries) -> f64 {
    let pre = series.pre_points();
    pre.iter().map(|p| p.1).sum::<f64>() / pre.len() as f64
}

pub fn did_level(series: &FragilitySeries) -> DidEstimate {
    let alpha = pre_mean(series);
    let effects = series
        .post_years()
        .iter()
        .map(|&y| {
            let l = series.value(y).expect("validated series");
            let beta = l - alpha;
            (
                y,
                Effect {
                    lambda2: l,
                    reference: alpha,
                    beta,
                    pct_change: beta / alpha * 100.0,
                },
            )
        })
        .collect();
    DidEstimate {
        spec: Specification::Level,
        baseline_alpha: alpha,
        effects,
        trend: None,
        counterfactuals: None,
    }
}

pub fn did_detrended(series: &FragilitySeries) -> Result<DidEstimate> {
    let pre = series.pre_points();
    if pre.len() < 2 {
        return Err(InferenceError::InsufficientPoints {
            needed: 2,
            got: pre.len(),
        });
    }
    let trend = ols_trend(&pre)?;
    let mut effects = BTreeMap::new();
    let mut counterfactuals = BTreeMap::new();
    for &y in series.post_years() {
        let l = series.value(y).expect("validated series");
        let cf = trend.predict(y);
        let beta = l - cf;
        counterfactuals.insert(y, cf);
        effects.insert(
            y,
            Effect {
                lambda2: l,
                reference: cf,
                beta,
                pct_change: beta / cf * 100.0,
            },
        );
    }
    Ok(DidEstimate {
        spec: Specification::Detrended,
        baseline_alpha: pre_mean(series),
        effects,
        trend: Some(trend),
        counterfactuals: Some(counterfactuals),
    })
}

pub fn did(series: &FragilitySeries, spec: Specification) -> Result<DidEstimate> {
    match spec {
        Specification::Level => Ok(did_level(series)),
        Specification::Detrended => did_detrended(series),
    }
}

/// Re-runs the level estimate inside the pre-period: years before
/// `false_year` form the baseline and the remaining pre-years play the
/// treated role. Original post-years are dropped.
pub fn placebo_test(series: &FragilitySeries, false_year: i32) -> Result<DidEstimate> {
    let pre = series.pre_years();
    let before: Vec<i32> = pre.iter().copied().filter(|&y| y < false_year).collect();
    let after: Vec<i32> = pre.iter().copied().filter(|&y| y >= false_year).collect();
    if before.is_empty() || after.is_empty() {
        return Err(InferenceError::PlaceboOutsidePre {
            year: false_year,
            pre: pre.to_vec(),
        });
    }
    let points = series.pre_points();
    Ok(did_level(&FragilitySeries::new(points, &before, &after)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub method: AllocationMethod,
    pub spec: Specification,
    pub pre_years: Vec<i32>,
    pub post_years: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub spec: Specification,
    /// Estimate on the original panel.
    pub point: DidEstimate,
    pub point_lambda2: BTreeMap<i32, f64>,
    /// Effect draws per post-year, in replicate order.
    pub replicates: BTreeMap<i32, Vec<f64>>,
    pub ci: BTreeMap<i32, (f64, f64)>,
    pub p_values: BTreeMap<i32, f64>,
    pub b: usize,
    pub master_seed: u64,
}

impl BootstrapResult {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn ci_excludes_zero(&self, year: i32) -> Option<bool> {
        self.ci.get(&year).map(|&(lo, hi)| lo > 0.0 || hi < 0.0)
    }
}

/// Linear interpolation between order statistics (the "type 7" rule).
/// `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sided percentile p-value 2·min(#{β ≤ 0}, #{β > 0}) / B.
pub fn bootstrap_p_value(draws: &[f64]) -> f64 {
    let b = draws.len() as f64;
    let nonpos = draws.iter().filter(|&&x| x <= 0.0).count() as f64;
    (2.0 * (nonpos / b).min((b - nonpos) / b)).min(1.0)
}

/// Draws `records.len()` banks with replacement, redrawing while fewer than
/// two distinct LEIs come up.
fn resample_year(records: &[BankRecord], year: i32, rng: &mut ChaCha8Rng) -> Result<Vec<BankRecord>> {
    let n = records.len();
    for _ in 0..=MAX_RESAMPLE_RETRIES {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let distinct: BTreeSet<&str> = idx.iter().map(|&i| records[i].lei.as_str()).collect();
        if distinct.len() >= 2 {
            return Ok(idx.into_iter().map(|i| records[i].clone()).collect());
        }
    }
    Err(InferenceError::ResampleFailed { year })
}

/// λ₂ of the network built from each year of the panel.
pub fn lambda2_by_year(panel: &ExposurePanel, years: &[i32], method: AllocationMethod) -> Result<BTreeMap<i32, f64>> {
    years
        .iter()
        .map(|&y| {
            let records = panel.year(y).ok_or(InferenceError::MissingYear(y))?;
            let g = build_network(records, method, y)?;
            Ok((y, algebraic_connectivity(&g)?))
        })
        .collect()
}

fn replicate_effects(
    panel: &ExposurePanel,
    config: &BootstrapConfig,
    years: &[i32],
    b: usize,
) -> Result<BTreeMap<i32, f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(b as u64);
    let mut points = Vec::with_capacity(years.len());
    for &y in years {
        let records = panel.year(y).ok_or(InferenceError::MissingYear(y))?;
        let sample = resample_year(records, y, &mut rng)?;
        let g = build_network(&sample, config.method, y)?;
        points.push((y, algebraic_connectivity(&g)?));
    }
    let series = FragilitySeries::new(points, &config.pre_years, &config.post_years)?;
    Ok(did(&series, config.spec)?
        .effects
        .into_iter()
        .map(|(y, e)| (y, e.beta))
        .collect())
}

/// Percentile bootstrap over banks. Replicate b draws from its own ChaCha8
/// stream (seed, b), so the result does not depend on thread scheduling.
pub fn bootstrap_did(panel: &ExposurePanel, config: &BootstrapConfig) -> Result<BootstrapResult> {
    if config.replicates < MIN_REPLICATES {
        return Err(InferenceError::TooFewReplicates(config.replicates));
    }
    let years: Vec<i32> = config
        .pre_years
        .iter()
        .chain(&config.post_years)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let point_lambda2 = lambda2_by_year(panel, &years, config.method)?;
    let series = FragilitySeries::new(
        point_lambda2.iter().map(|(&y, &l)| (y, l)).collect(),
        &config.pre_years,
        &config.post_years,
    )?;
    let point = did(&series, config.spec)?;

    let draws: Vec<BTreeMap<i32, f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| replicate_effects(panel, config, &years, b))
        .collect::<Result<_>>()?;

    let mut replicates = BTreeMap::new();
    let mut ci = BTreeMap::new();
    let mut p_values = BTreeMap::new();
    for &y in series.post_years() {
        let d: Vec<f64> = draws.iter().map(|m| m[&y]).collect();
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        ci.insert(y, (percentile(&sorted, 0.025), percentile(&sorted, 0.975)));
        p_values.insert(y, bootstrap_p_value(&d));
        replicates.insert(y, d);
    }
    Ok(BootstrapResult {
        spec: config.spec,
        point,
        point_lambda2,
        replicates,
        ci,
        p_values,
        b: config.replicates,
        master_seed: config.seed,
    })
}

/// Keeps only banks present in every year.
pub fn balanced_panel(panel: &ExposurePanel) -> Result<ExposurePanel> {
    let mut common: Option<BTreeSet<String>> = None;
    for records in panel.records().values() {
        let leis: BTreeSet<String> = records.iter().map(|r| r.lei.clone()).collect();
        common = Some(match common {
            None => leis,
            Some(c) => c.intersection(&leis).cloned().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.is_empty() {
        return Err(InferenceError::EmptyIntersection);
    }
    let kept = panel
        .records()
        .iter()
        .map(|(&y, recs)| (y, recs.iter().filter(|r| common.contains(&r.lei)).cloned().collect()))
        .collect();
    Ok(ExposurePanel::new(kept)?)
}

/// λ₂ of the subgraph induced by `members`.
pub fn subgroup_lambda2<S: AsRef<str>>(graph: &WeightedGraph, members: &[S]) -> Result<f64> {
    if members.len() < 2 {
        return Err(InferenceError::TooFewMembers(members.len()));
    }
    let idx = members
        .iter()
        .map(|m| {
            graph
                .index_of(m.as_ref())
                .ok_or_else(|| InferenceError::UnknownBank(m.as_ref().to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(algebraic_connectivity(&graph.induced(&idx))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Core,
    Periphery,
    Nordic,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Core, Region::Periphery, Region::Nordic];

    pub fn of(country: &str) -> Option<Region> {
        match country {
            "DE" | "FR" | "NL" | "BE" => Some(Region::Core),
            "GR" | "IE" | "IT" | "PT" | "ES" => Some(Region::Periphery),
            "DK" | "FI" | "NO" | "SE" => Some(Region::Nordic),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Core => "core",
            Region::Periphery => "periphery",
            Region::Nordic => "nordic",
        }
    }
}

/// Node labels of the banks domiciled in `region`. The graph must have been
/// built from `records` in the same order.
pub fn region_members(graph: &WeightedGraph, records: &[BankRecord], region: Region) -> Result<Vec<String>> {
    if records.len() != graph.n() {
        return Err(InferenceError::LengthMismatch {
            expected: graph.n(),
            got: records.len(),
        });
    }
    Ok(records
        .iter()
        .enumerate()
        .filter(|(_, r)| Region::of(&r.country) == Some(region))
        .map(|(i, _)| graph.banks()[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationSnapshot {
    pub n_banks: usize,
    pub lambda2: f64,
    pub total_exposure: f64,
}

impl ConsolidationSnapshot {
    /// Total exposure counts both directions of every edge, matching the
    /// directed total before symmetrization.
    pub fn from_stats(stats: &NetworkStats, lambda2: f64) -> Self {
        ConsolidationSnapshot {
            n_banks: stats.n_nodes,
            lambda2,
            total_exposure: 2.0 * stats.total_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Elasticity {
    /// (Δλ₂/λ₂_a) / (Δn/n_a).
    pub observed: f64,
    /// −1 + ln(E_b/E_a)/ln(n_b/n_a), the complete-graph prediction.
    pub predicted: f64,
}

pub fn consolidation_elasticity(a: &ConsolidationSnapshot, b: &ConsolidationSnapshot) -> Result<Elasticity> {
    if a.n_banks == b.n_banks {
        return Err(InferenceError::SameSize(a.n_banks));
    }
    for (name, value) in [
        ("lambda2", a.lambda2),
        ("total_exposure", a.total_exposure),
        ("total_exposure", b.total_exposure),
    ] {
        if !(value > 0.0) {
            return Err(InferenceError::InvalidParameter {
                name,
                requirement: "positive",
                value,
            });
        }
    }
    let (na, nb) = (a.n_banks as f64, b.n_banks as f64);
    let observed = ((b.lambda2 - a.lambda2) / a.lambda2) / ((nb - na) / na);
    let predicted = -1.0 + (b.total_exposure / a.total_exposure).ln() / (nb / na).ln();
    Ok(Elasticity { observed, predicted })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubperiodRow {
    pub from_year: i32,
    pub to_year: i32,
    pub lambda2_from: f64,
    pub lambda2_to: f64,
    pub change: f64,
    pub pct_change: f64,
    /// Compound annual rate, in percent.
    pub annualized_pct: f64,
}

fn subperiod_row(a: (i32, f64), b: (i32, f64)) -> SubperiodRow {
    let years = (b.0 - a.0) as f64;
    SubperiodRow {
        from_year: a.0,
        to_year: b.0,
        lambda2_from: a.1,
        lambda2_to: b.1,
        change: b.1 - a.1,
        pct_change: (b.1 / a.1 - 1.0) * 100.0,
        annualized_pct: ((b.1 / a.1).powf(1.0 / years) - 1.0) * 100.0,
    }
}

/// Consecutive changes from the last pre-year through each post-year, plus
/// the overall change as the final row.
pub fn subperiod_decomposition(series: &FragilitySeries) -> Vec<SubperiodRow> {
    let last_pre = *series.pre_years().last().expect("validated series");
    let mut chain = vec![(last_pre, series.value(last_pre).expect("validated series"))];
    chain.extend(
        series
            .post_years()
            .iter()
            .map(|&y| (y, series.value(y).expect("validated series"))),
    );
    let mut rows: Vec<SubperiodRow> = chain.windows(2).map(|w| subperiod_row(w[0], w[1])).collect();
    if chain.len() > 2 {
        rows.push(subperiod_row(chain[0], *chain.last().unwrap()));
    }
    rows
}

/// α_t = α₀ · (λ₂_target / λ₂)^β.
pub fn dynamic_coupling_limit(alpha0: f64, lambda2_target: f64, lambda2: f64, beta: f64) -> Result<f64> {
    if !(lambda2 > 0.0) {
        return Err(InferenceError::InvalidParameter {
            name: "lambda2",
            requirement: "positive",
            value: lambda2,
        });
    }
    if !(lambda2_target > 0.0) {
        return Err(InferenceError::InvalidParameter {
            name: "lambda2_target",
            requirement: "positive",
            value: lambda2_target,
        });
    }
    for (name, value) in [("alpha0", alpha0), ("beta", beta)] {
        if !(value >= 0.0) {
            return Err(InferenceError::InvalidParameter {
                name,
                requirement: "non-negative",
                value,
            });
        }
    }
    Ok(alpha0 * (lambda2_target / lambda2).powf(beta))
}

/// buffer_i = κ · SC_i · RWA_i.
pub fn spectral_buffers(centralities: &[f64], rwa: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if rwa.len() != centralities.len() {
        return Err(InferenceError::LengthMismatch {
            expected: centralities.len(),
            got: rwa.len(),
        });
    }
    if !(kappa >= 0.0) {
        return Err(InferenceError::InvalidParameter {
            name: "kappa",
            requirement: "non-negative",
            value: kappa,
        });
    }
    Ok(centralities.iter().zip(rwa).map(|(s, r)| kappa * s * r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingBreach {
    pub bank_i: String,
    pub bank_j: String,
    pub weight: f64,
    pub limit: f64,
}

/// Edges with w_ij > α_t · min(capital_i, capital_j).
pub fn coupling_breaches(graph: &WeightedGraph, capitals: &[f64], alpha_t: f64) -> Result<Vec<CouplingBreach>> {
    if capitals.len() != graph.n() {
        return Err(InferenceError::LengthMismatch {
            expected: graph.n(),
            got: capitals.len(),
        });
    }
    let mut out = Vec::new();
    for i in 0..graph.n() {
        for j in (i + 1)..graph.n() {
            let limit = alpha_t * capitals[i].min(capitals[j]);
            let w = graph.weight(i, j);
            if w > limit {
                out.push(CouplingBreach {
                    bank_i: graph.banks()[i].clone(),
                    bank_j: graph.banks()[j].clone(),
                    weight: w,
                    limit,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub kappa: f64,
    pub alpha0: f64,
    pub beta: f64,
    pub lambda2_target: f64,
    pub rwa: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub lambda2: f64,
    pub alpha_t: f64,
    pub centralities: Vec<f64>,
    pub buffers: Vec<f64>,
    pub breaches: Vec<CouplingBreach>,
}

pub fn policy_calculators(graph: &WeightedGraph, capitals: &[f64], params: &PolicyParams) -> Result<PolicyReport> {
    let lambda2 = algebraic_connectivity(graph)?;
    let alpha_t = dynamic_coupling_limit(params.alpha0, params.lambda2_target, lambda2, params.beta)?;
    let centralities = spectral_centralities(graph)?;
    let buffers = spectral_buffers(&centralities, &params.rwa, params.kappa)?;
    let breaches = coupling_breaches(graph, capitals, alpha_t)?;
    Ok(PolicyReport {
        lambda2,
        alpha_t,
        centralities,
        buffers,
        breaches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PUBLISHED: [(i32, f64); 5] = [
        (2014, 1322.87),
        (2016, 1797.59),
        (2018, 2037.42),
        (2021, 2007.23),
        (2023, 2181.96),
    ];

    fn published() -> FragilitySeries {
        FragilitySeries::split_at(PUBLISHED.to_vec(), 2020).unwrap()
    }

    #[test]
    fn level_did_on_published_series() {
        let d = did_level(&published());
        assert!((d.baseline_alpha - 1719.29).abs() < 0.01);
        assert!((d.beta(2021).unwrap() - 287.93).abs() < 0.02);
        assert!((d.beta(2023).unwrap() - 462.67).abs() < 0.02);
        assert!((d.effects[&2021].pct_change - 16.7).abs() < 0.1);
        assert!((d.effects[&2023].pct_change - 26.9).abs() < 0.1);
    }

    #[test]
    fn level_did_degenerate_cases() {
        let flat = FragilitySeries::split_at(vec![(1, 5.0), (2, 5.0), (3, 5.0)], 3).unwrap();
        assert!(did_level(&flat).effects.values().all(|e| e.beta == 0.0));
        let pair = FragilitySeries::split_at(vec![(1, 2.0), (2, 7.5)], 2).unwrap();
        assert_eq!(did_level(&pair).beta(2), Some(5.5));
    }

    #[test]
    fn series_validation() {
        assert!(matches!(
            FragilitySeries::split_at(vec![(1, 1.0)], 0),
            Err(InferenceError::EmptyPre)
        ));
        assert!(matches!(
            FragilitySeries::split_at(vec![(1, 1.0)], 5),
            Err(InferenceError::EmptyPost)
        ));
        assert!(matches!(
            FragilitySeries::new(vec![(1, 1.0), (2, 1.0)], &[1], &[1, 2]),
            Err(InferenceError::Overlap(1))
        ));
        assert!(matches!(
            FragilitySeries::new(vec![(1, 1.0), (2, 1.0), (3, 1.0)], &[1], &[2]),
            Err(InferenceError::Unassigned(3))
        ));
        assert!(matches!(
            FragilitySeries::new(vec![(1, 1.0), (2, 1.0)], &[1], &[2, 4]),
            Err(InferenceError::MissingYear(4))
        ));
        assert!(matches!(
            FragilitySeries::new(vec![(1, 1.0), (1, 2.0)], &[1], &[2]),
            Err(InferenceError::DuplicateYear(1))
        ));
    }

    #[test]
    fn ols_cases() {
        let t = ols_trend(&[(0, 0.0), (1, 1.0)]).unwrap();
        assert!(t.gamma0.abs() < 1e-15 && (t.gamma1 - 1.0).abs() < 1e-15 && (t.r_squared - 1.0).abs() < 1e-15);
        let flat = ols_trend(&[(0, 1.0), (1, 1.0), (2, 1.0)]).unwrap();
        assert_eq!(flat.gamma1, 0.0);
        assert_eq!(flat.r_squared, 0.0);
        let pre = ols_trend(&PUBLISHED[..3]).unwrap();
        assert!((pre.gamma1 - 178.6375).abs() < 1e-9);
        let all = ols_trend(&PUBLISHED).unwrap();
        assert!((all.gamma1 - 80.9).abs() < 0.1);
        assert!(matches!(
            ols_trend(&[(3, 1.0), (3, 2.0)]),
            Err(InferenceError::IdenticalYears)
        ));
        assert!(matches!(
            ols_trend(&[(3, 1.0)]),
            Err(InferenceError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn detrended_cases() {
        let d = did_detrended(&published()).unwrap();
        let cf = d.counterfactuals.as_ref().unwrap()[&2021];
        assert!((cf - 2612.48).abs() < 0.01);
        assert!((d.beta(2021).unwrap() + 605.25).abs() < 0.01);
        let line = FragilitySeries::split_at(vec![(2014, 0.0), (2016, 2.0), (2018, 4.0), (2021, 10.0)], 2020).unwrap();
        let d = did_detrended(&line).unwrap();
        assert!((d.counterfactuals.as_ref().unwrap()[&2021] - 7.0).abs() < 1e-12);
        assert!((d.beta(2021).unwrap() - 3.0).abs() < 1e-12);
        let one_pre = FragilitySeries::split_at(vec![(1, 1.0), (2, 2.0)], 2).unwrap();
        assert!(matches!(
            did_detrended(&one_pre),
            Err(InferenceError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn placebo_cases() {
        let p = placebo_test(&published(), 2016).unwrap();
        assert!((p.beta(2016).unwrap() - 474.72).abs() < 1e-9);
        let p = placebo_test(&published(), 2017).unwrap();
        assert!((p.baseline_alpha - 1560.23).abs() < 1e-9);
        assert!((p.beta(2018).unwrap() - 477.19).abs() < 1e-9);
        assert!(p.beta(2021).is_none());
        assert!(matches!(
            placebo_test(&published(), 2014),
            Err(InferenceError::PlaceboOutsidePre { .. })
        ));
        assert!(matches!(
            placebo_test(&published(), 2021),
            Err(InferenceError::PlaceboOutsidePre { .. })
        ));
        let flat = FragilitySeries::split_at(vec![(1, 3.0), (2, 3.0), (3, 3.0), (4, 9.0)], 4).unwrap();
        assert_eq!(placebo_test(&flat, 2).unwrap().beta(2), Some(0.0));
    }

    #[test]
    fn percentile_and_p_value() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&s, 0.0), 1.0);
        assert_eq!(percentile(&s, 1.0), 5.0);
        assert_eq!(percentile(&s, 0.5), 3.0);
        assert!((percentile(&s, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(bootstrap_p_value(&[1.0; 100]), 0.0);
        assert_eq!(bootstrap_p_value(&[-1.0, 1.0]), 1.0);
        assert_eq!(bootstrap_p_value(&[0.0, 1.0, 2.0, 3.0]), 0.5);
    }

    #[test]
    fn ratios_from_published_series() {
        let d = did_level(&published());
        let tau_ratio = d.baseline_alpha / 2181.96;
        assert!((tau_ratio - 0.788).abs() < 0.001);
        let amp = d.beta(2023).unwrap() / d.beta(2021).unwrap();
        assert!((amp - 1.61).abs() < 0.01);
    }

    #[test]
    fn subperiods_compound() {
        let rows = subperiod_decomposition(&published());
        assert_eq!(rows.len(), 3);
        assert!((rows[0].change + 30.19).abs() < 1e-9);
        assert!((rows[0].annualized_pct + 0.5).abs() < 0.05);
        assert!((rows[1].pct_change - 8.7).abs() < 0.05);
        assert!((rows[1].annualized_pct - 4.3).abs() < 0.05);
        assert!((rows[2].pct_change - 7.1).abs() < 0.05);
        assert!((rows[2].annualized_pct - 1.4).abs() < 0.05);
    }

    #[test]
    fn elasticity_cases() {
        let a = ConsolidationSnapshot {
            n_banks: 61,
            lambda2: 1322.87,
            total_exposure: 79_317.0,
        };
        let b = ConsolidationSnapshot {
            n_banks: 33,
            lambda2: 2181.96,
            total_exposure: 68_403.0,
        };
        let e = consolidation_elasticity(&a, &b).unwrap();
        assert!((e.observed + 1.41).abs() < 0.02);
        assert!((e.predicted + 0.76).abs() < 0.01);
        let c = ConsolidationSnapshot { n_banks: 40, ..a };
        assert_eq!(consolidation_elasticity(&a, &c).unwrap().observed, 0.0);
        assert!(matches!(
            consolidation_elasticity(&a, &a),
            Err(InferenceError::SameSize(61))
        ));
    }

    #[test]
    fn policy_cases() {
        let a = dynamic_coupling_limit(0.25, 1700.0, 2182.0, 1.0).unwrap();
        assert!((a - 0.195).abs() < 0.001);
        assert!(dynamic_coupling_limit(0.25, 1700.0, 0.0, 1.0).is_err());
        assert_eq!(spectral_buffers(&[1.0, 2.0], &[5.0, 5.0], 0.0).unwrap(), vec![0.0, 0.0]);

        let g = WeightedGraph::complete("k", 4, 1.0);
        let r = policy_calculators(
            &g,
            &[10.0; 4],
            &PolicyParams {
                kappa: 0.1,
                alpha0: 0.25,
                beta: 1.0,
                lambda2_target: 2.0,
                rwa: vec![100.0; 4],
            },
        )
        .unwrap();
        assert!(r.buffers.iter().all(|b| (b - r.buffers[0]).abs() < 1e-12));
        assert!((r.buffers[0] - 10.0).abs() < 1e-10);
        // α_t = 0.25·2/4 = 0.125, limit 1.25 > w = 1
        assert!(r.breaches.is_empty());
        let tight = coupling_breaches(&g, &[10.0, 10.0, 5.0, 10.0], 0.15).unwrap();
        assert_eq!(tight.len(), 3);
        assert!(tight.iter().all(|b| b.bank_i == "k2" || b.bank_j == "k2"));
    }

    #[test]
    fn subgroup_cases() {
        let g = WeightedGraph::from_edges(
            vec!["a".into(), "b".into(), "c".into()],
            &[(0, 1, 2.5), (1, 2, 1.0), (0, 2, 1.0)],
            0,
        )
        .unwrap();
        assert_eq!(subgroup_lambda2(&g, &["a", "b"]).unwrap(), 5.0);
        let all = subgroup_lambda2(&g, &["a", "b", "c"]).unwrap();
        assert!((all - algebraic_connectivity(&g).unwrap()).abs() < 1e-15);
        assert!(matches!(
            subgroup_lambda2(&g, &["a"]),
            Err(InferenceError::TooFewMembers(1))
        ));
        assert!(matches!(
            subgroup_lambda2(&g, &["a", "z"]),
            Err(InferenceError::UnknownBank(_))
        ));
    }

    #[test]
    fn regions() {
        assert_eq!(Region::of("DE"), Some(Region::Core));
        assert_eq!(Region::of("GR"), Some(Region::Periphery));
        assert_eq!(Region::of("FI"), Some(Region::Nordic));
        assert_eq!(Region::of("PL"), None);
    }
}
