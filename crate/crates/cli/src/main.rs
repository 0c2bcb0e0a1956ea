use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use eot_cli::{run, sweep, RunSpec, ScenarioSource, SweepAxis};
use eot_core::config::preset_text;
use eot_core::{FilterKind, OmegaMode};

/// Simulate extended object trackers on a sensor network and write metrics.
#[derive(Debug, Parser)]
#[command(name = "eot", version)]
struct Args {
    /// Shipped scenario preset (s1, s2, s3).
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,

    /// Scenario configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Filter to run: ceot, ci or cm.
    #[arg(long, value_parser = parse_filter)]
    filter: Option<FilterKind>,

    /// Consensus iterations per measurement.
    #[arg(long = "L")]
    consensus_iterations: Option<usize>,

    /// Poisson mean of the per-sensor measurement count.
    #[arg(long, conflicts_with = "fixed_n")]
    lambda: Option<f64>,

    /// Fixed per-sensor measurement count.
    #[arg(long)]
    fixed_n: Option<usize>,

    /// Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Number of scans per run.
    #[arg(long)]
    steps: Option<usize>,

    /// CM innovation weight: G (network size) or a number.
    #[arg(long, value_parser = parse_omega)]
    omega: Option<OmegaMode>,

    /// Output directory.
    #[arg(long, default_value = "eot-out")]
    out: PathBuf,

    /// Comma-separated consensus iteration counts to sweep.
    #[arg(long = "sweep-L", value_delimiter = ',', num_args = 1.., conflicts_with = "sweep_lambda")]
    sweep_l: Option<Vec<usize>>,

    /// Comma-separated Poisson means to sweep.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sweep_lambda: Option<Vec<f64>>,

    /// Print the preset configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

fn parse_filter(s: &str) -> std::result::Result<FilterKind, String> {
    s.parse().map_err(|e: eot_core::EotError| e.to_string())
}

fn parse_omega(s: &str) -> std::result::Result<OmegaMode, String> {
    s.parse().map_err(|e: eot_core::EotError| e.to_string())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("EOT_THREADS") {
        let n: usize = v.parse().with_context(|| format!("EOT_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("EOT_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main_inner(args: Args) -> Result<()> {
    if args.dump_config {
        match (&args.scenario, &args.config) {
            (Some(name), _) => print!("{}", preset_text(name)?),
            (None, Some(path)) => print!("{}", std::fs::read_to_string(path)?),
            (None, None) => bail!("--dump-config needs --scenario or --config"),
        }
        return Ok(());
    }
    configure_threads()?;
    let scenario = match (args.scenario, args.config) {
        (Some(name), None) => ScenarioSource::Preset(name),
        (None, Some(path)) => ScenarioSource::File(path),
        (None, None) => bail!("one of --scenario or --config is required"),
        (Some(_), Some(_)) => unreachable!("rejected by the parser"),
    };
    let spec = RunSpec {
        scenario,
        filter: args.filter,
        consensus_iterations: args.consensus_iterations,
        lambda: args.lambda,
        fixed_n: args.fixed_n,
        runs: args.runs,
        seed: args.seed,
        omega: args.omega,
        steps: args.steps,
        out: args.out,
    };
    let axis = match (args.sweep_l, args.sweep_lambda) {
        (Some(ls), _) => Some(SweepAxis::ConsensusIterations(ls)),
        (None, Some(rates)) => Some(SweepAxis::Lambda(rates)),
        (None, None) => None,
    };
    match axis {
        Some(axis) => {
            let path = sweep(&spec, &axis)?;
            println!("{}", path.display());
        }
        None => {
            let artifacts = run(&spec)?;
            print!("{}", std::fs::read_to_string(&artifacts.summary)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
