use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use lapfield::covariance::Family;
use lapfield::field::DepType;
use lapfield::io::{Config, PitMode};
use lapfield::tail::ExceedanceKind;

/// Laplace random fields for spatial wind-gust extremes.
///
/// Settings come from an optional TOML config; flags override it. Every
/// output carries the resolved config, the seed and the config's SHA-256.
#[derive(Debug, Parser)]
#[command(name = "lapfield", version)]
pub struct Cli {
    /// TOML configuration file; relative paths inside it are resolved
    /// against its directory.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LAPFIELD_THREADS")]
    pub threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    /// Sites CSV (`id,x,y,dist_sea_km`).
    #[arg(long, global = true)]
    pub sites: Option<PathBuf>,

    /// Observations CSV (`date,<site ids>`).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the censored Weibull tail with a distance-to-sea covariate.
    FitMargins(FitMarginsArgs),
    /// Fit dependence models and write the AIC comparison table.
    FitDependence(FitDependenceArgs),
    /// Empirical tail correlations, Hill residual coefficients, QQ points.
    Diagnose(DiagnoseArgs),
    /// Unconditional field simulation.
    Simulate(SimulateArgs),
    /// Simulation given values at some sites.
    Condsim(CondsimArgs),
    /// Return levels and periods over a prediction grid.
    Return(ReturnArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FitMargins(_) => "fit-margins",
            Command::FitDependence(_) => "fit-dependence",
            Command::Diagnose(_) => "diagnose",
            Command::Simulate(_) => "simulate",
            Command::Condsim(_) => "condsim",
            Command::Return(_) => "return",
        }
    }
}

#[derive(Debug, Args)]
pub struct FitMarginsArgs {
    /// Threshold in m/s; overrides `--threshold-prob`.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub threshold_prob: Option<f64>,
    /// Fix the covariate slope at zero.
    #[arg(long)]
    pub no_delta1: bool,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitDependenceArgs {
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<Family>>,
    #[arg(long, value_delimiter = ',')]
    pub types: Option<Vec<DepType>>,
    #[arg(long, value_delimiter = ',')]
    pub anisotropy: Option<Vec<bool>>,
    #[arg(long)]
    pub prob_u: Option<f64>,
    #[arg(long)]
    pub kind: Option<ExceedanceKind>,
    #[arg(long, value_delimiter = ',')]
    pub nu_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// `rank` or `margins`.
    #[arg(long, value_parser = parse_pit)]
    pub pit: Option<PitMode>,
    /// Margins JSON for `--pit margins`.
    #[arg(long)]
    pub margins: Option<PathBuf>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Comparison table CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Fitted model JSON for model curves and QQ points.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub qq_threshold: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Back-transform to m/s with these margins.
    #[arg(long)]
    pub margins: Option<PathBuf>,
    #[arg(short, long)]
    pub n: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CondsimArgs {
    #[command(flatten)]
    pub sim: SimulateArgs,
    /// Conditioning CSV (`id,value`).
    #[arg(long, conflicts_with = "site")]
    pub conditioning: Option<PathBuf>,
    /// Condition on a single site.
    #[arg(long)]
    pub site: Option<String>,
    /// Level at `--site` (m/s with margins, standard margin otherwise).
    #[arg(long, requires = "site", conflicts_with = "period_years")]
    pub level: Option<f64>,
    /// Level at `--site` given as a return period in years.
    #[arg(long, requires = "site")]
    pub period_years: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReturnArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub margins: Option<PathBuf>,
    /// Prediction grid in the sites CSV format.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Return periods in years (repeatable).
    #[arg(long = "period")]
    pub periods: Vec<f64>,
    /// Levels in m/s (repeatable).
    #[arg(long = "level")]
    pub levels: Vec<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_pit(s: &str) -> Result<PitMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "rank" => Ok(PitMode::Rank),
        "margins" => Ok(PitMode::Margins),
        _ => Err(format!("expected rank or margins, got {s:?}")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl Cli {
    /// Applies flags on top of the file configuration.
    pub fn apply(&self, c: &mut Config) {
        set(&mut c.seed, self.seed);
        set_opt(&mut c.data.sites, self.sites.clone());
        set_opt(&mut c.data.observations, self.data.clone());
        match &self.command {
            Command::FitMargins(a) => {
                let m = &mut c.margins;
                set_opt(&mut m.threshold, a.threshold);
                set(&mut m.threshold_prob, a.threshold_prob);
                if a.no_delta1 {
                    m.fit_delta1 = false;
                }
                set(&mut m.bootstrap_reps, a.bootstrap);
                set(&mut m.block, a.block);
                set_opt(&mut m.output, a.output.clone());
            }
            Command::FitDependence(a) => {
                let d = &mut c.dependence;
                set(&mut d.families, a.families.clone());
                set(&mut d.types, a.types.clone());
                set(&mut d.anisotropy, a.anisotropy.clone());
                set(&mut d.prob_u, a.prob_u);
                set(&mut d.kind, a.kind);
                set(&mut d.nu_grid, a.nu_grid.clone());
                set(&mut d.restarts, a.restarts);
                set(&mut d.max_evals, a.max_evals);
                set(&mut d.pit, a.pit);
                set_opt(&mut d.margins, a.margins.clone());
                set(&mut d.bootstrap_reps, a.bootstrap);
                set(&mut d.block, a.block);
                set_opt(&mut d.output, a.output.clone());
                set_opt(&mut d.table, a.table.clone());
            }
            Command::Diagnose(a) => {
                let d = &mut c.diagnostics;
                set(&mut d.thresholds, a.thresholds.clone());
                set(&mut d.k, a.k);
                set_opt(&mut d.model, a.model.clone());
                set(&mut d.qq_threshold, a.qq_threshold);
                set_opt(&mut d.output_dir, a.output_dir.clone());
            }
            Command::Simulate(a) => apply_sim(a, c),
            Command::Condsim(a) => {
                apply_sim(&a.sim, c);
                let s = &mut c.simulate;
                if a.conditioning.is_some() || a.site.is_some() {
                    s.conditioning = a.conditioning.clone();
                    s.site = a.site.clone();
                    s.level = a.level;
                    s.period_years = a.period_years;
                }
            }
            Command::Return(a) => {
                let r = &mut c.risk;
                set_opt(&mut r.model, a.model.clone());
                set_opt(&mut r.margins, a.margins.clone());
                set_opt(&mut r.grid, a.grid.clone());
                if !a.periods.is_empty() || !a.levels.is_empty() {
                    r.periods = a.periods.clone();
                    r.levels = a.levels.clone();
                }
                set_opt(&mut r.output, a.output.clone());
            }
        }
    }
}

fn apply_sim(a: &SimulateArgs, c: &mut Config) {
    let s = &mut c.simulate;
    set_opt(&mut s.model, a.model.clone());
    set_opt(&mut s.margins, a.margins.clone());
    set(&mut s.n, a.n);
    set_opt(&mut s.output, a.output.clone());
}
