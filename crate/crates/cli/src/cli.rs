use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Fit, simulate and analyse cascading risk networks.
#[derive(Debug, Parser)]
#[command(name = "carp", version, about, args_override_self = true)]
pub struct Cli {
    /// Worker threads (defaults to the number of CPUs). Output does not
    /// depend on this value.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    /// Flat `key = value` file of subcommand options; command-line flags
    /// take precedence. Lines starting with `#` are comments.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum likelihood fit of (alpha, beta, gamma) to a history.
    Fit(FitArgs),
    /// Monte Carlo trajectories of active frequencies.
    Simulate(SimulateArgs),
    /// Mean-field steady state.
    SteadyState(SteadyStateArgs),
    /// Validation experiments on a fitted history.
    Validate(ValidateArgs),
    /// Risk-to-risk and category influence by knockout.
    Influence(InfluenceArgs),
    /// Structural properties of a network.
    Stats(StatsArgs),
    /// fit, steady-state, influence and stats for one year directory.
    Pipeline(PipelineArgs),
    /// Synthetic network, history and generating parameters.
    Generate(GenerateArgs),
    /// Align the risk catalogs of two survey years.
    Align(AlignArgs),
    /// Re-run the command recorded in a manifest and verify its artifacts.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Simulate(_) => "simulate",
            Command::SteadyState(_) => "steady-state",
            Command::Validate(_) => "validate",
            Command::Influence(_) => "influence",
            Command::Stats(_) => "stats",
            Command::Pipeline(_) => "pipeline",
            Command::Generate(_) => "generate",
            Command::Align(_) => "align",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    /// Top of the survey likelihood scale.
    #[arg(long, default_value_t = 5.0)]
    pub scale_max: f64,
    /// Margin added to the scale maximum so that L < 1.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Catalog likelihoods are already in (0, 1).
    #[arg(long)]
    pub pre_normalized: bool,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    /// Risk catalog CSV: id,numeric_code,name,category,likelihood[,impact].
    #[arg(long, value_name = "FILE")]
    pub risks: PathBuf,
    /// Expert pair counts CSV: risk_a,risk_b,count.
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    /// Survey year label.
    #[arg(long, default_value = "network")]
    pub year: String,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// JSON file with `alpha`, `beta` and `gamma` (e.g. a fit.json).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["alpha", "beta", "gamma"])]
    pub params: Option<PathBuf>,
    /// Internal activation exponent.
    #[arg(long, requires_all = ["beta", "gamma"])]
    pub alpha: Option<f64>,
    /// External activation exponent, per active neighbour.
    #[arg(long, requires_all = ["alpha", "gamma"])]
    pub beta: Option<f64>,
    /// Recovery exponent.
    #[arg(long, requires_all = ["alpha", "beta"])]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitOptions {
    /// Grid points per parameter axis for the start search.
    #[arg(long, default_value_t = 6)]
    pub grid_points: usize,
    /// Number of best grid points refined by the simplex search.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Relative improvement below which restarts stop.
    #[arg(long, default_value_t = 1e-8)]
    pub ftol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 50)]
    pub max_restarts: usize,
}

#[derive(Debug, Args)]
pub struct MeanFieldOptions {
    /// Fixed-point residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Monthly history CSV, long (month,risk_id,state) or wide form.
    #[arg(long, value_name = "FILE")]
    pub history: PathBuf,
    #[command(flatten)]
    pub fit: FitOptions,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub params: ParamsArgs,
    /// History whose last month is the initial state (all passive
    /// otherwise). Parameters are fitted to it when none are given.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    /// Steps per run.
    #[arg(long, default_value_t = 10_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    /// Master seed.
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitOptions,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SteadyStateArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub params: ParamsArgs,
    /// History to fit when no parameters are given.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub meanfield: MeanFieldOptions,
    #[command(flatten)]
    pub fit: FitOptions,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Recovery,
    Forward,
    NetworkEffect,
    Sensitivity,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Observed monthly history.
    #[arg(long, value_name = "FILE")]
    pub history: PathBuf,
    #[command(flatten)]
    pub params: ParamsArgs,
    #[arg(long)]
    pub seed: u64,
    /// Bootstrap replicates (recovery, forward).
    #[arg(long, default_value_t = 125)]
    pub replicates: usize,
    /// Simulated runs per parameter set (forward, network-effect).
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Forecast window in months (forward).
    #[arg(long, default_value_t = 12)]
    pub months: usize,
    /// Relative cut of likelihoods and activity (sensitivity).
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[command(flatten)]
    pub meanfield: MeanFieldOptions,
    #[command(flatten)]
    pub fit: FitOptions,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Sum,
    Mean,
}

#[derive(Debug, Args)]
pub struct InfluenceOptions {
    /// How risk influences combine into category influence.
    #[arg(long, value_enum, default_value_t = AggregationArg::Sum)]
    pub aggregation: AggregationArg,
    /// Log-scaling constant: ln(1 + kappa x).
    #[arg(long, default_value_t = 99.0)]
    pub kappa: f64,
}

#[derive(Debug, Args)]
pub struct InfluenceArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub params: ParamsArgs,
    /// History to fit when no parameters are given.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub influence: InfluenceOptions,
    #[command(flatten)]
    pub meanfield: MeanFieldOptions,
    #[command(flatten)]
    pub fit: FitOptions,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Directory holding risks.csv, pairs.csv and history.csv.
    #[arg(long, value_name = "DIR")]
    pub dir: PathBuf,
    /// Year label (defaults to the directory name).
    #[arg(long)]
    pub year: Option<String>,
    #[command(flatten)]
    pub scale: ScaleArgs,
    #[command(flatten)]
    pub fit: FitOptions,
    #[command(flatten)]
    pub meanfield: MeanFieldOptions,
    #[command(flatten)]
    pub influence: InfluenceOptions,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: u64,
    /// Number of risks.
    #[arg(long, default_value_t = 50)]
    pub size: usize,
    /// Edge density 2E / (N (N - 1)).
    #[arg(long, default_value_t = 0.2)]
    pub density: f64,
    /// Recorded months after the burn-in.
    #[arg(long, default_value_t = 156)]
    pub months: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.003)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value = "2013")]
    pub year: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub year_a: String,
    #[arg(long, value_name = "FILE")]
    pub risks_a: PathBuf,
    #[arg(long)]
    pub year_b: String,
    #[arg(long, value_name = "FILE")]
    pub risks_b: PathBuf,
    /// Mapping CSV numeric_code,year,year_index (the bundled table otherwise).
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
    #[command(flatten)]
    pub scale: ScaleArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}
