use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fragility::network::AllocationMethod;
use fragility_cli::config::DEFAULT_TREATMENT_YEAR;
use fragility_cli::{cmd_analyze, cmd_build, cmd_did, cmd_stress, cmd_synth, BootstrapSettings, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "fragility",
    version,
    about = "Spectral fragility analysis of interbank exposure networks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Exposure panel CSV.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Allocation rule for country exposures: equal, size or exposure.
    #[arg(long, global = true, default_value = "equal")]
    method: AllocationMethod,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Bootstrap replicates; no bootstrap when absent.
    #[arg(long, global = true)]
    bootstrap_b: Option<usize>,
    /// Mixing-time tolerance.
    #[arg(long, global = true, default_value_t = (-1.0f64).exp())]
    epsilon: f64,
    /// `year,lambda2` CSV used instead of networks built from a panel.
    #[arg(long, global = true)]
    series: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reconstruct per-year networks and write edge lists plus a stats table.
    Build,
    /// Spectral metrics, spectra and centralities per year.
    Analyze {
        /// Include eigenvectors in the spectrum files.
        #[arg(long)]
        eigenvectors: bool,
    },
    /// Difference-in-differences estimates, placebo and subperiod tables.
    Did {
        /// Comma-separated pre-treatment years.
        #[arg(long, value_delimiter = ',')]
        pre_years: Vec<i32>,
        /// Comma-separated post-treatment years.
        #[arg(long, value_delimiter = ',')]
        post_years: Vec<i32>,
        /// First post-treatment year when no explicit partition is given.
        #[arg(long, default_value_t = DEFAULT_TREATMENT_YEAR)]
        treatment_year: i32,
        /// False treatment years for placebo tests.
        #[arg(long, value_delimiter = ',')]
        placebo: Vec<i32>,
    },
    /// Cascade stress test driven by a scenario file.
    Stress {
        /// Scenario JSON: shocks, capital buffers and simulation settings.
        #[arg(long)]
        scenario: PathBuf,
        /// Panel year to stress; the last year by default.
        #[arg(long)]
        year: Option<i32>,
        /// Edge-list CSV to stress instead of a panel year.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Generate a synthetic panel.
    Synth {
        /// Panel manifest JSON; the built-in calibration when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> RunConfig {
    let g = &cli.global;
    let mut cfg = RunConfig {
        input: g.input.clone(),
        out: g.out.clone(),
        method: g.method,
        seed: g.seed,
        bootstrap: g.bootstrap_b.map(|replicates| BootstrapSettings {
            replicates,
            seed: g.seed,
        }),
        epsilon: g.epsilon,
        series: g.series.clone(),
        ..RunConfig::default()
    };
    match &cli.command {
        Command::Build => {}
        Command::Synth { spec } => cfg.manifest = spec.clone(),
        Command::Analyze { eigenvectors } => cfg.eigenvectors = *eigenvectors,
        Command::Did {
            pre_years,
            post_years,
            treatment_year,
            placebo,
        } => {
            cfg.pre_years = pre_years.clone();
            cfg.post_years = post_years.clone();
            cfg.treatment_year = *treatment_year;
            cfg.placebo_years = placebo.clone();
        }
        Command::Stress { scenario, year, edges } => {
            cfg.scenario = Some(scenario.clone());
            cfg.year = *year;
            cfg.edges = edges.clone();
        }
    }
    cfg
}

fn run(cli: &Cli) -> fragility_cli::Result<()> {
    let cfg = config(cli);
    match cli.command {
        Command::Build => {
            let r = cmd_build(&cfg)?;
            println!("{} networks -> {}", r.stats.len(), r.stats_file.display());
        }
        Command::Analyze { .. } => {
            let r = cmd_analyze(&cfg)?;
            for n in &r.notes {
                println!("note: {n}");
            }
            println!("{} metric rows, {} centrality rows", r.rows.len(), r.centralities.len());
        }
        Command::Did { .. } => {
            let r = cmd_did(&cfg)?;
            let level = r.level();
            println!("alpha {:.2}", level.baseline_alpha);
            for (y, e) in &level.effects {
                println!("{y}: effect {:.2} ({:.1}%)", e.beta, e.pct_change);
            }
            for n in &r.notes {
                println!("note: {n}");
            }
        }
        Command::Stress { .. } => {
            let r = cmd_stress(&cfg)?;
            println!(
                "{} failure(s), delta lambda2 {:.6}",
                r.result.total_failures, r.result.fragility_change
            );
        }
        Command::Synth { .. } => {
            let r = cmd_synth(&cfg)?;
            println!("{}", r.panel_file.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
