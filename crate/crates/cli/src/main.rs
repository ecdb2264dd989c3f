//! `spikemon` command-line front end.
//!
//! Exit codes: 0 success or no alarm, 1 I/O, 2 usage, 3 alarm, 4 degenerate
//! statistic.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::exit::{exit_code, Outcome};

#[derive(Debug, Parser)]
#[command(
    name = "spikemon",
    version,
    about = "Monitor eigenvalue streams for an emerging rank-one signal"
)]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, env = "SPIKE_SEED", default_value_t = 1)]
    seed: u64,

    /// Worker threads for replication loops (default: all cores).
    #[arg(long, global = true, env = "SPIKE_THREADS")]
    threads: Option<usize>,

    /// More log output; repeat for debug and trace.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate critical values of the limit statistic.
    Quantiles(QuantilesArgs),
    /// Monitor a matrix stream against a training stream.
    Monitor(MonitorArgs),
    /// Generate a synthetic matrix stream.
    Synth(SynthArgs),
    /// Run false-alarm or power experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Turn panel or matrix data into a monitorable stream.
    #[command(subcommand)]
    Ingest(IngestCommand),
}

/// Simulation settings for critical values that are not in the cache.
#[derive(Debug, Clone, Args)]
struct SimArgs {
    /// Horizon T of the limit statistic.
    #[arg(long = "T", default_value_t = 500)]
    horizon: usize,

    /// Monte-Carlo replications.
    #[arg(long, default_value_t = 10_000)]
    reps: usize,

    /// Quantile cache; rows are reused and new ones appended.
    #[arg(
        long = "quantile-table",
        env = "SPIKE_QTABLE",
        default_value = "quantiles.csv"
    )]
    table: PathBuf,
}

#[derive(Debug, Args)]
struct QuantilesArgs {
    /// Training length m.
    #[arg(long)]
    m: usize,

    #[arg(long = "T", default_value_t = 500)]
    horizon: usize,

    #[arg(long, default_value_t = 10_000)]
    reps: usize,

    /// Significance levels, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_alpha, default_value = "0.05,0.10")]
    alpha: Vec<f64>,

    /// Table to create or update.
    #[arg(long, env = "SPIKE_QTABLE", default_value = "quantiles.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MonitorArgs {
    /// Training matrices (matrix-stream CSV); m is their count.
    #[arg(long)]
    train: PathBuf,

    /// Matrices to monitor (matrix-stream CSV).
    #[arg(long)]
    stream: PathBuf,

    #[arg(long, value_parser = parse_alpha, default_value_t = 0.05)]
    alpha: f64,

    /// Fixed critical value; skips the quantile table.
    #[arg(long, conflicts_with = "alpha")]
    threshold: Option<f64>,

    #[command(flatten)]
    sim: SimArgs,

    /// Write the `k,gamma` trace here.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Stop after this many monitoring steps.
    #[arg(long)]
    max_k: Option<usize>,

    /// Keep tracing after the alarm.
    #[arg(long = "continue")]
    keep_going: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Sub,
    Super,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,

    /// Training length; the change happens after m + k*.
    #[arg(long)]
    m: usize,

    /// Number of matrices to emit.
    #[arg(long)]
    len: usize,

    /// `uniform`, `beta` or a fixed strength in [0, 1].
    #[arg(long, default_value = "uniform")]
    law: String,

    #[arg(long, value_enum, default_value_t = RegimeArg::Sub)]
    regime: RegimeArg,

    #[arg(long, default_value_t = 0.5)]
    delta: f64,

    #[arg(long, default_value_t = 0)]
    kstar: usize,

    #[arg(long, default_value_t = 50)]
    burn_in: usize,

    /// Whole stream.
    #[arg(long, required_unless_present_any = ["train_out", "stream_out"])]
    out: Option<PathBuf>,

    /// First m matrices.
    #[arg(long)]
    train_out: Option<PathBuf>,

    /// Matrices after the first m.
    #[arg(long)]
    stream_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,

    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,

    #[arg(long, value_delimiter = ',', value_parser = parse_alpha, default_value = "0.05,0.10")]
    alpha: Vec<f64>,

    #[arg(long, default_value = "uniform")]
    law: String,

    #[arg(long, default_value_t = 1000)]
    reps: usize,

    /// Monitoring horizon in multiples of m.
    #[arg(long, default_value_t = 2)]
    horizon_factor: usize,

    #[arg(long, default_value_t = 50)]
    burn_in: usize,

    /// Fixed critical value for every level; skips the quantile table.
    #[arg(long)]
    threshold: Option<f64>,

    /// Horizon T for critical values simulated on demand (default: the
    /// monitoring horizon, horizon-factor times m).
    #[arg(long = "T")]
    horizon: Option<usize>,

    /// Replications for critical values simulated on demand.
    #[arg(long, default_value_t = 10_000)]
    quantile_reps: usize,

    #[arg(
        long = "quantile-table",
        env = "SPIKE_QTABLE",
        default_value = "quantiles.csv"
    )]
    table: PathBuf,

    /// Results CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Proportion of false alarms on subcritical streams.
    Pfa(ExperimentArgs),
    /// Detection rate and delay with a change after m + k*.
    Power {
        #[command(flatten)]
        common: ExperimentArgs,

        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<f64>,

        #[arg(long, value_delimiter = ',', required = true)]
        kstar: Vec<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum IngestCommand {
    /// Subtract a smoothed calendar-day profile fitted on a history panel.
    Deseasonalize {
        /// Panel CSV (`date,location,value`) used to fit the profile.
        #[arg(long)]
        history: PathBuf,

        /// Panel CSV to transform.
        #[arg(long)]
        series: PathBuf,

        #[arg(long, default_value_t = 30)]
        window: usize,

        #[arg(long, default_value_t = 365)]
        period: usize,

        /// Fill interior gaps linearly instead of failing.
        #[arg(long)]
        interpolate: bool,

        #[arg(long)]
        out: PathBuf,
    },
    /// Outer products `V_t V_tᵀ` of a panel.
    Outer {
        #[arg(long)]
        series: PathBuf,

        #[arg(long)]
        interpolate: bool,

        #[arg(long)]
        out: PathBuf,
    },
    /// Subtract the mean of the first matrices from the rest.
    Center {
        #[arg(long)]
        stream: PathBuf,

        /// Number of leading matrices forming the baseline.
        #[arg(long)]
        baseline: usize,

        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie strictly between 0 and 1, got {a}"))
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    match commands::run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Alarm) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
