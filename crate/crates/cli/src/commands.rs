use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fragility::cascade::{CascadeResult, CascadeScenario};
use fragility::exposure::{load_panel, save_panel, synthesize_panel, ExposurePanel, PanelManifest};
use fragility::inference::{
    bootstrap_did, did_detrended, did_level, lambda2_by_year, placebo_test, subperiod_decomposition, BootstrapConfig,
    BootstrapResult, DidEstimate, FragilitySeries, InferenceError, Specification, SubperiodRow,
};
use fragility::network::{
    allocate, build_network, network_stats, symmetrize, validate_conservation, NetworkStats, WeightedGraph,
};
use fragility::spectral::{
    fragility_metrics, laplacian, mixing_time, spectral_centralities, spectrum, FragilityMetrics,
};
use log::{info, warn};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::tables::{columns, num, opt, write_json, write_text, Table};

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_input_panel(cfg: &RunConfig) -> Result<ExposurePanel> {
    let path = cfg.input_path()?;
    let panel = load_panel(path)?;
    info!("loaded {} ({} years)", path.display(), panel.years().len());
    Ok(panel)
}

/// Reads a `year,lambda2` CSV.
pub fn load_series(path: &Path) -> Result<Vec<(i32, f64)>> {
    let file = File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |message: String| CliError::BadInput {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() != 2 || &header[0] != "year" || &header[1] != "lambda2" {
        return Err(bad(format!(
            "expected header year,lambda2, got {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut points = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| bad(e.to_string()))?;
        let year = row[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("line {line}: bad year {:?}", &row[0])))?;
        let value: f64 = row[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("line {line}: bad lambda2 {:?}", &row[1])))?;
        if !value.is_finite() {
            return Err(bad(format!("line {line}: lambda2 must be finite")));
        }
        points.push((year, value));
    }
    if points.is_empty() {
        return Err(bad("no rows".into()));
    }
    Ok(points)
}

fn write_graph_edges(g: &WeightedGraph, path: PathBuf) -> Result<PathBuf> {
    let file = File::create(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    g.write_edge_csv(BufWriter::new(file))?;
    Ok(path)
}

#[derive(Debug)]
pub struct BuildReport {
    pub stats: Vec<NetworkStats>,
    pub edge_files: Vec<PathBuf>,
    pub stats_file: PathBuf,
    pub warnings: Vec<String>,
}

pub fn cmd_build(cfg: &RunConfig) -> Result<BuildReport> {
    cfg.validate()?;
    let panel = load_input_panel(cfg)?;
    let out = cfg.prepare_out()?;
    let mut stats = Vec::new();
    let mut edge_files = Vec::new();
    let mut warnings = Vec::new();
    for &year in panel.years() {
        let records = panel.year(year).expect("listed year");
        let directed = allocate(records, cfg.method)?;
        let g = symmetrize(&directed).with_year(year);
        let report = validate_conservation(&g, &directed, records)?;
        for w in &report.warnings {
            warn!("{year}: {w}");
            warnings.push(format!("{year}: {w}"));
        }
        if !report.passed() {
            return Err(CliError::Validation(format!(
                "year {year}: reconstruction does not conserve exposure ({} bank mismatches, total discrepancy {})",
                report.bank_failures.len(),
                report.total_discrepancy
            )));
        }
        edge_files.push(write_graph_edges(&g, out.join(format!("edges_{year}.csv")))?);
        stats.push(network_stats(&g));
    }

    let mut table = Table::create(out.join("network_stats.csv"), columns::NETWORK_STATS)?;
    for s in &stats {
        table.row([
            s.year.to_string(),
            s.n_nodes.to_string(),
            s.n_edges.to_string(),
            num(s.density * 100.0),
            num(s.total_weight),
            num(s.mean_weight),
            num(s.sd_weight),
            num(s.min_weight),
            num(s.max_weight),
            num(s.mean_degree),
            num(s.sd_degree),
            num(s.min_degree),
            num(s.max_degree),
        ])?;
    }
    let stats_file = table.finish()?;
    Ok(BuildReport {
        stats,
        edge_files,
        stats_file,
        warnings,
    })
}

/// One row of the metrics table. Series-only rows carry λ₂ and what follows
/// from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub year: i32,
    pub lambda2: f64,
    pub inv_lambda2_e3: Option<f64>,
    pub mixing_time: Option<f64>,
    pub metrics: Option<FragilityMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralityRow {
    pub year: i32,
    pub bank: String,
    pub centrality: f64,
    pub rank: usize,
}

#[derive(Debug)]
pub struct AnalyzeReport {
    pub rows: Vec<MetricsRow>,
    pub centralities: Vec<CentralityRow>,
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn metrics_row(year: i32, lambda2: f64, epsilon: f64, metrics: Option<FragilityMetrics>) -> Result<MetricsRow> {
    let (inv, mix) = if lambda2 > 0.0 {
        (Some(1000.0 / lambda2), Some(mixing_time(lambda2, epsilon)?))
    } else {
        (None, None)
    };
    Ok(MetricsRow {
        year,
        lambda2,
        inv_lambda2_e3: inv,
        mixing_time: mix,
        metrics,
    })
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut centralities = Vec::new();
    let mut notes = Vec::new();
    let mut files = Vec::new();

    if let Some(series) = &cfg.series {
        let points = load_series(series)?;
        let out = cfg.prepare_out()?;
        for (year, l2) in points {
            rows.push(metrics_row(year, l2, cfg.epsilon, None)?);
        }
        notes.push("λ₂ series supplied directly: only λ₂-derived columns are filled, no centrality table".into());
        files.push(write_metrics(out, &rows)?);
        return Ok(AnalyzeReport {
            rows,
            centralities,
            notes,
            files,
        });
    }

    let panel = load_input_panel(cfg)?;
    let out = cfg.prepare_out()?;
    for &year in panel.years() {
        let g = build_network(panel.year(year).expect("listed year"), cfg.method, year)?;
        let m = fragility_metrics(&g)?;
        if !m.connected {
            let note = format!("year {year}: network is disconnected, λ₂ = 0");
            warn!("{note}");
            notes.push(note);
        }
        let spec = spectrum(&laplacian(&g))?;
        let doc = spec.to_json(cfg.eigenvectors).map_err(|source| CliError::Json {
            what: "spectrum",
            source,
        })?;
        files.push(write_text(out.join(format!("spectrum_{year}.json")), &doc)?);

        if g.n() < 3 {
            notes.push(format!(
                "year {year}: spectral centrality needs at least 3 banks, got {}",
                g.n()
            ));
        } else {
            let sc = spectral_centralities(&g)?;
            let mut order: Vec<usize> = (0..sc.len()).collect();
            order.sort_by(|&a, &b| sc[b].total_cmp(&sc[a]).then(a.cmp(&b)));
            let mut rank = vec![0; sc.len()];
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r + 1;
            }
            for (i, bank) in g.banks().iter().enumerate() {
                centralities.push(CentralityRow {
                    year,
                    bank: bank.clone(),
                    centrality: sc[i],
                    rank: rank[i],
                });
            }
        }
        rows.push(metrics_row(year, m.lambda2, cfg.epsilon, Some(m))?);
    }
    files.push(write_metrics(out, &rows)?);

    let mut table = Table::create(out.join("spectral_centrality.csv"), columns::CENTRALITY)?;
    for c in &centralities {
        table.row([
            c.year.to_string(),
            c.bank.clone(),
            num(c.centrality),
            c.rank.to_string(),
        ])?;
    }
    files.push(table.finish()?);
    for n in &notes {
        info!("{n}");
    }
    Ok(AnalyzeReport {
        rows,
        centralities,
        notes,
        files,
    })
}

fn write_metrics(out: &Path, rows: &[MetricsRow]) -> Result<PathBuf> {
    let mut table = Table::create(out.join("fragility_metrics.csv"), columns::METRICS)?;
    for r in rows {
        let m = r.metrics.as_ref();
        table.row([
            r.year.to_string(),
            m.map(|m| m.n.to_string()).unwrap_or_default(),
            m.map(|m| m.connected.to_string()).unwrap_or_default(),
            num(r.lambda2),
            opt(r.inv_lambda2_e3),
            opt(m.map(|m| m.spectral_gap)),
            opt(m.and_then(|m| m.lambda3)),
            opt(m.map(|m| m.spectral_radius)),
            opt(m.and_then(|m| m.radius_ratio)),
            opt(m.and_then(|m| m.effective_resistance)),
            opt(m.and_then(|m| m.normalized_lambda2)),
            opt(m.and_then(|m| m.avg_resistance_distance)),
            opt(r.mixing_time),
        ])?;
    }
    table.finish()
}

#[derive(Debug, Clone, Serialize)]
pub struct DidSummary {
    pub series: Vec<(i32, f64)>,
    pub pre_years: Vec<i32>,
    pub post_years: Vec<i32>,
    pub level: DidEstimate,
    pub detrended: Option<DidEstimate>,
    pub placebo: BTreeMap<i32, DidEstimate>,
    pub subperiods: Vec<SubperiodRow>,
    /// Per post-year (ci_lower, ci_upper, p_value) when bootstrapped.
    pub bootstrap: Option<BTreeMap<i32, (f64, f64, f64)>>,
}

#[derive(Debug)]
pub struct DidReport {
    pub summary: DidSummary,
    pub bootstrap: Option<BootstrapResult>,
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl DidReport {
    pub fn level(&self) -> &DidEstimate {
        &self.summary.level
    }
}

fn partition(cfg: &RunConfig, points: Vec<(i32, f64)>) -> Result<FragilitySeries> {
    let series = if cfg.pre_years.is_empty() {
        FragilitySeries::split_at(points, cfg.treatment_year)
    } else {
        FragilitySeries::new(points, &cfg.pre_years, &cfg.post_years)
    };
    series.map_err(|e| match e {
        InferenceError::EmptyPre
        | InferenceError::EmptyPost
        | InferenceError::Overlap(_)
        | InferenceError::DuplicateYear(_)
        | InferenceError::Unassigned(_)
        | InferenceError::MissingYear(_) => CliError::Config(format!("treatment partition: {e}")),
        other => other.into(),
    })
}

pub fn cmd_did(cfg: &RunConfig) -> Result<DidReport> {
    cfg.validate()?;
    let mut notes = Vec::new();
    let (points, panel) = match &cfg.series {
        Some(path) => {
            if cfg.bootstrap.is_some() {
                return Err(CliError::Config(
                    "the bootstrap resamples banks and needs a panel (--input), not a λ₂ series".into(),
                ));
            }
            (load_series(path)?, None)
        }
        None => {
            let panel = load_input_panel(cfg)?;
            let l2 = lambda2_by_year(&panel, panel.years(), cfg.method)?;
            (l2.into_iter().collect(), Some(panel))
        }
    };
    let series = partition(cfg, points)?;
    let out = cfg.prepare_out()?;

    let level = did_level(&series);
    let detrended = match did_detrended(&series) {
        Ok(d) => Some(d),
        Err(InferenceError::InsufficientPoints { .. }) => {
            notes.push("detrended estimate needs at least two pre-years; skipped".into());
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut placebo = BTreeMap::new();
    for &fy in &cfg.placebo_years {
        placebo.insert(fy, placebo_test(&series, fy)?);
    }
    let subperiods = subperiod_decomposition(&series);

    let bootstrap = match (cfg.bootstrap, &panel) {
        (Some(b), Some(panel)) => {
            let bc = BootstrapConfig {
                replicates: b.replicates,
                seed: b.seed,
                method: cfg.method,
                spec: Specification::Level,
                pre_years: series.pre_years().to_vec(),
                post_years: series.post_years().to_vec(),
            };
            info!("bootstrap: {} replicates, seed {}", b.replicates, b.seed);
            Some(bootstrap_did(panel, &bc)?)
        }
        _ => None,
    };

    let mut files = Vec::new();
    files.push(write_level_table(out, &series, &level, bootstrap.as_ref())?);
    if let Some(d) = &detrended {
        let mut t = Table::create(out.join("did_detrended.csv"), columns::DETRENDED)?;
        for (y, e) in &d.effects {
            t.row([
                y.to_string(),
                num(e.lambda2),
                num(e.reference),
                num(e.beta),
                num(e.pct_change),
            ])?;
        }
        files.push(t.finish()?);
    }
    if !placebo.is_empty() {
        let mut t = Table::create(out.join("did_placebo.csv"), columns::PLACEBO)?;
        for (fy, est) in &placebo {
            for (y, e) in &est.effects {
                t.row([
                    fy.to_string(),
                    y.to_string(),
                    num(e.lambda2),
                    num(e.reference),
                    num(e.beta),
                    num(e.pct_change),
                ])?;
            }
        }
        files.push(t.finish()?);
    }
    let mut t = Table::create(out.join("did_subperiods.csv"), columns::SUBPERIODS)?;
    for r in &subperiods {
        t.row([
            r.from_year.to_string(),
            r.to_year.to_string(),
            num(r.lambda2_from),
            num(r.lambda2_to),
            num(r.change),
            num(r.pct_change),
            num(r.annualized_pct),
        ])?;
    }
    files.push(t.finish()?);

    let summary = DidSummary {
        series: series.points().to_vec(),
        pre_years: series.pre_years().to_vec(),
        post_years: series.post_years().to_vec(),
        level,
        detrended,
        placebo,
        subperiods,
        bootstrap: bootstrap.as_ref().map(|b| {
            b.ci.iter()
                .map(|(&y, &(lo, hi))| (y, (lo, hi, b.p_values[&y])))
                .collect()
        }),
    };
    files.push(write_json(out.join("did.json"), "DID summary", &summary)?);
    if let Some(b) = &bootstrap {
        let doc = b.to_json().map_err(|source| CliError::Json {
            what: "bootstrap",
            source,
        })?;
        files.push(write_text(out.join("bootstrap.json"), &doc)?);
    }
    Ok(DidReport {
        summary,
        bootstrap,
        notes,
        files,
    })
}

fn write_level_table(
    out: &Path,
    series: &FragilitySeries,
    level: &DidEstimate,
    bootstrap: Option<&BootstrapResult>,
) -> Result<PathBuf> {
    let mut t = Table::create(out.join("did_level.csv"), columns::DID)?;
    // pre row: interval columns hold the pre-period range
    let pre: Vec<f64> = series.pre_points().iter().map(|p| p.1).collect();
    let lo = pre.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pre.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    t.row([
        "pre".to_string(),
        num(level.baseline_alpha),
        num(0.0),
        num(0.0),
        num(lo),
        num(hi),
        String::new(),
    ])?;
    for (y, e) in &level.effects {
        let (ci, p) = match bootstrap {
            Some(b) => (b.ci.get(y).copied(), b.p_values.get(y).copied()),
            None => (None, None),
        };
        t.row([
            y.to_string(),
            num(e.lambda2),
            num(e.beta),
            num(e.pct_change),
            opt(ci.map(|c| c.0)),
            opt(ci.map(|c| c.1)),
            opt(p),
        ])?;
    }
    t.finish()
}

#[derive(Debug)]
pub struct StressReport {
    pub result: CascadeResult,
    pub files: Vec<PathBuf>,
}

fn stress_graph(cfg: &RunConfig) -> Result<WeightedGraph> {
    if let Some(path) = &cfg.edges {
        let file = File::open(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        return WeightedGraph::read_edge_csv(file).map_err(|e| CliError::BadInput {
            path: path.clone(),
            message: e.to_string(),
        });
    }
    let panel = load_input_panel(cfg)?;
    let year = match cfg.year {
        Some(y) => y,
        None => *panel.years().last().expect("non-empty panel"),
    };
    let records = panel
        .year(year)
        .ok_or_else(|| CliError::Config(format!("year {year} not in panel (has {:?})", panel.years())))?;
    Ok(build_network(records, cfg.method, year)?)
}

pub fn cmd_stress(cfg: &RunConfig) -> Result<StressReport> {
    cfg.validate()?;
    let scenario_path = cfg
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::Config("--scenario is required".into()))?;
    let scenario = CascadeScenario::from_json(&read_to_string(scenario_path)?).map_err(|e| CliError::BadInput {
        path: scenario_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let graph = stress_graph(cfg)?;
    let result = scenario.run(&graph)?;
    info!(
        "{} failure(s) over {} round(s), λ₂ {} -> {}",
        result.total_failures, result.rounds, result.pre_lambda2, result.post_lambda2
    );

    let out = cfg.prepare_out()?;
    let mut files = Vec::new();
    let doc = result.to_json().map_err(|source| CliError::Json {
        what: "cascade result",
        source,
    })?;
    files.push(write_text(out.join("stress_timeline.json"), &doc)?);

    let mut t = Table::create(out.join("stress_summary.csv"), columns::STRESS_SUMMARY)?;
    t.row([
        result.total_failures.to_string(),
        result.rounds.to_string(),
        num(result.stabilization_time),
        num(result.total_loss),
        num(result.pre_lambda2),
        num(result.post_lambda2),
        num(result.fragility_change),
    ])?;
    files.push(t.finish()?);

    let mut t = Table::create(out.join("stress_paths.csv"), columns::STRESS_PATHS)?;
    for p in &result.trajectory {
        for (bank, x) in result.banks.iter().zip(&p.distress) {
            t.row([num(p.time), bank.clone(), opt(*x)])?;
        }
    }
    files.push(t.finish()?);
    Ok(StressReport { result, files })
}

#[derive(Debug)]
pub struct SynthReport {
    pub panel: ExposurePanel,
    pub panel_file: PathBuf,
    pub manifest_file: PathBuf,
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthReport> {
    cfg.validate()?;
    let manifest = match &cfg.manifest {
        Some(path) => PanelManifest::load(path)?,
        None => PanelManifest::eba_calibration(),
    };
    let panel = synthesize_panel(&manifest, cfg.seed)?;
    let out = cfg.prepare_out()?;
    let panel_file = out.join("panel.csv");
    save_panel(&panel, &panel_file)?;
    let manifest_file = write_json(out.join("manifest.json"), "manifest", &manifest)?;
    Ok(SynthReport {
        panel,
        panel_file,
        manifest_file,
    })
}
