//! `oasis`: generate traces, run schedulers over them, and run the self-checks.
//!
//! Every command ends with one `summary key=value ...` line on stdout.
//! Exit codes: 0 success, 1 I/O or other failure, 2 invalid spec, config or
//! trace, 3 a scheduler produced an infeasible allocation, 4 a check failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oasis_core::sim::SchedulerKind;

use crate::config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "oasis", version, about = "Online scheduling of parameter-server training jobs")]
struct Cli {
    /// TOML file with [trace], [run] and [verify] sections; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic trace as JSON lines.
    Generate(GenerateArgs),
    /// Run schedulers over one trace file.
    Simulate(SimulateArgs),
    /// Run schedulers over a sweep of generated traces.
    Compare(CompareArgs),
    /// Offline optimum over OASiS utility on tiny instances.
    Ratio(RatioArgs),
    /// Run the self-check suites.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default)]
struct TraceOverrides {
    /// Trace seed (compare: first seed of the sweep).
    #[arg(long)]
    seed: Option<u64>,
    /// Jobs per trace.
    #[arg(long)]
    job_count: Option<usize>,
    /// Time slots in the horizon.
    #[arg(long)]
    slots: Option<u32>,
    /// Start from the desk or full preset instead of the configured one.
    #[arg(long, value_parser = ["desk", "full"])]
    preset: Option<String>,
    /// File of relative per-slot arrival weights.
    #[arg(long, value_name = "FILE")]
    arrival_profile: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    trace: TraceOverrides,
    #[arg(long, short, value_name = "PATH")]
    out: PathBuf,
    /// Also write the effective trace spec as TOML.
    #[arg(long, value_name = "PATH")]
    spec_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct RunOverrides {
    /// Schedulers to run, comma separated (default: all).
    #[arg(long = "scheduler", short = 's', value_delimiter = ',')]
    schedulers: Vec<SchedulerKind>,
    /// Multiplier on OASiS's price ratios.
    #[arg(long)]
    estimate_scale: Option<f64>,
    /// Also solve each trace exactly (tiny traces only).
    #[arg(long)]
    oracle: bool,
    /// Keep decision latencies in the output tables; without it repeated runs write identical files.
    #[arg(long)]
    timing: bool,
    /// Results CSV, one row per (scheduler, seed).
    #[arg(long, value_name = "PATH")]
    results: Option<PathBuf>,
    /// Per-job CSV.
    #[arg(long, value_name = "PATH")]
    job_details: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_name = "PATH")]
    trace: PathBuf,
    /// Seed column value for the output rows.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    run: RunOverrides,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    trace: TraceOverrides,
    /// Number of seeds in the sweep.
    #[arg(long)]
    seeds: Option<u64>,
    #[command(flatten)]
    run: RunOverrides,
    /// Plot series (utility against load, timeliness histogram) as CSV.
    #[arg(long, value_name = "PATH")]
    plot_data: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, short = 'j')]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct RatioArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    instances: Option<usize>,
    /// Per-instance CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    oracle_instances: Option<usize>,
    #[arg(long)]
    competitive_instances: Option<usize>,
    #[arg(long)]
    feasibility_jobs: Option<usize>,
    #[arg(long)]
    duality_traces: Option<usize>,
    /// Plant an over-capacity placement; the feasibility suite must then fail.
    #[arg(long)]
    inject_overflow: bool,
}

/// A check ran to completion and reported failures.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    use oasis_core::Error as E;
    for cause in err.chain() {
        if cause.is::<CheckFailed>() {
            return 4;
        }
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::SchedulerViolation { .. } | E::CapacityOverflow { .. } => 3,
                E::Io(_) | E::Csv(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let name = match &cli.command {
        Command::Generate(_) => "generate",
        Command::Simulate(_) => "simulate",
        Command::Compare(_) => "compare",
        Command::Ratio(_) => "ratio",
        Command::Verify(_) => "verify",
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err:#}");
            // Failed checks already printed their own summary.
            if code != 4 {
                println!("summary command={name} status=error exit={code}");
            }
            ExitCode::from(code)
        }
    }
}
