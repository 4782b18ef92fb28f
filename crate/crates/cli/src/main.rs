mod config;
mod error;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;

/// Voltage-island flow for FPGA systolic arrays. Stages hand off through files in the
/// output directory; any config key can be overridden as a trailing `--key=value`.
#[derive(Parser, Debug)]
#[command(name = "voltisland", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Overrides {
    /// Config overrides, e.g. `--cluster.k=4 --plan.technology 22nm`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY=VALUE")]
    values: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a timing report into per-MAC minimum slack.
    Ingest(Overrides),
    /// Group MACs by minimum slack.
    Cluster(Overrides),
    /// Compute static partition voltages.
    Plan(Overrides),
    /// Lay partitions out as slice-grid islands and emit constraints.
    Floorplan(Overrides),
    /// Run the cycle-level array at the planned voltages.
    Simulate(Overrides),
    /// Tune partition voltages from Razor flags.
    Calibrate(Overrides),
    /// Price the partition voltages with the dynamic power model.
    Report(Overrides),
    /// Price equal-island variants concurrently, one subdirectory each.
    Sweep(Overrides),
    /// Run ingest through report in order.
    RunAll(Overrides),
    /// List every config key with its default.
    Keys,
}

fn run(cli: Cli) -> Result<()> {
    let (stages, overrides): (Vec<&str>, &[String]) = match &cli.command {
        Command::Keys => {
            print!("{}", config::describe_keys());
            return Ok(());
        }
        Command::Ingest(o) => (vec!["ingest"], &o.values),
        Command::Cluster(o) => (vec!["cluster"], &o.values),
        Command::Plan(o) => (vec!["plan"], &o.values),
        Command::Floorplan(o) => (vec!["floorplan"], &o.values),
        Command::Simulate(o) => (vec!["simulate"], &o.values),
        Command::Calibrate(o) => (vec!["calibrate"], &o.values),
        Command::Report(o) => (vec!["report"], &o.values),
        Command::Sweep(o) => (vec!["sweep"], &o.values),
        Command::RunAll(o) => (stages::PIPELINE.to_vec(), &o.values),
    };
    let cfg = config::load(cli.config.as_deref(), overrides)?;
    let dir = PathBuf::from(cfg.text("output.dir")?);
    for stage in stages {
        println!("{}", stages::run_stage(stage, &cfg, &dir)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
