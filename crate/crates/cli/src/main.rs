//! `urnwalk` command-line tool.
//!
//! Every command writes its outputs atomically and leaves a
//! `<out>.manifest.json` beside them that `urnwalk replay` can re-run.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<urnwalk::Error> for CliError {
    fn from(e: urnwalk::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "urnwalk", version, about = "Correlated urn random walk toolkit")]
struct Cli {
    /// Worker threads (default: all cores). Does not change any output.
    #[arg(long, global = true, env = "URNWALK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact PMF after N steps (CSV) and its moments (JSON on stdout).
    Evolve(EvolveArgs),
    /// Monte Carlo moments for one or more horizons N.
    Simulate(SimulateArgs),
    /// Convert a price CSV into a ±1 tick series.
    Ingest(IngestArgs),
    /// Empirical block histogram or auto-correlation of a tick series.
    Stats(StatsArgs),
    /// Synthetic tick series drawn from the model (κ = 0 gives iid ticks).
    Synth(SynthArgs),
    /// Posterior for κ and the log Bayes factor against κ = 0.
    Fit(FitArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EvolveArgs {
    /// Number of steps N.
    #[arg(long)]
    pub n: usize,
    /// Correlation κ in [-1/2, 1/2].
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
    /// PMF CSV with columns x,p.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Horizon N, or a comma-separated list for a sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Auto-correlations at base n for lags 1..=maxlag, given as `n,maxlag`.
    #[arg(long, value_parser = parse_pair)]
    pub acf: Option<(usize, usize)>,
    /// Moments CSV; auto-correlations go to `<stem>.acf.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// CSV with one price per row in the first column.
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long, default_value = "0.1")]
    pub tick: String,
    /// Tick CSV with a single `tick` column.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hist,
    Acf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub ticks: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Hist)]
    pub mode: Mode,
    /// Block length N for the histogram.
    #[arg(long)]
    pub n: Option<usize>,
    /// Base n of the auto-correlation.
    #[arg(long)]
    pub acf_n: Option<usize>,
    /// Number of lags L of the auto-correlation.
    #[arg(long)]
    pub acf_lags: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub subensembles: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Block length N; each block restarts the walk.
    #[arg(long)]
    pub n: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
    #[arg(long, default_value_t = 10_000)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Tick CSV; statistics are built from it.
    #[arg(long, conflicts_with_all = ["hist", "acf_data"])]
    pub ticks: Option<PathBuf>,
    /// Precomputed histogram CSV (x,mean,err,n_samples).
    #[arg(long, conflicts_with = "acf_data")]
    pub hist: Option<PathBuf>,
    /// Precomputed auto-correlation CSV (lag,mean,err,n_samples).
    #[arg(long)]
    pub acf_data: Option<PathBuf>,
    /// Horizon N of the model.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Mode::Hist)]
    pub mode: Mode,
    #[arg(long)]
    pub acf_n: Option<usize>,
    #[arg(long)]
    pub acf_lags: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub subensembles: usize,
    #[arg(long, default_value_t = 100_000)]
    pub mcmc_steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary JSON; samples go to `<stem>.samples.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `n,maxlag`, got `{s}`"))?;
    let a = a.trim().parse().map_err(|e| format!("bad n `{a}`: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("bad maxlag `{b}`: {e}"))?;
    Ok((a, b))
}

/// Parses `args` (without the program name) and runs the command.
fn run(args: Vec<String>) -> Result<(), CliError> {
    let argv = std::iter::once("urnwalk".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // A pool may already exist when replaying; the first one wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let recorded = output::strip_thread_args(&args);
    match cli.command {
        Command::Evolve(a) => commands::evolve(&a, recorded),
        Command::Simulate(a) => commands::simulate(&a, recorded),
        Command::Ingest(a) => commands::ingest(&a, recorded),
        Command::Stats(a) => commands::stats(&a, recorded),
        Command::Synth(a) => commands::synth(&a, recorded),
        Command::Fit(a) => commands::fit(&a, recorded),
        Command::Replay(a) => {
            let manifest = output::RunManifest::read(&a.manifest)?;
            commands::check_replay(&manifest)?;
            if manifest.args.first().map(String::as_str) == Some("replay") {
                return Err(CliError::Usage("a manifest cannot replay itself".into()));
            }
            run(manifest.args)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("urnwalk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
