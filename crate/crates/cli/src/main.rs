use std::path::PathBuf;
use std::process::ExitCode;

use avaas_core::pipeline::{Pipeline, PipelineError, StageReport};
use avaas_core::scenario::ScenarioConfig;
use clap::{Parser, Subcommand};

/// Traffic state estimation with automated vehicles acting as moving and
/// parked observers.
#[derive(Debug, Parser)]
#[command(name = "avaas", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Overrides the simulation and observer seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for detection and estimation.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Overrides `observers.penetration_pct`.
    #[arg(long, global = true)]
    penetration: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the microsimulation; writes trajectory.csv and ground_truth.csv.
    Simulate,
    /// Validate an external trajectory file; writes the same files as simulate.
    Ingest {
        /// Trajectory file; defaults to `ingest.trajectory_file`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Sample observers and estimate lane and network states.
    Estimate,
    /// Cluster lanes with k-means and write the elbow curve.
    Cluster,
    /// Compare estimates against ground truth.
    Compare,
    /// Write paired MFD series at cluster and network scope.
    Mfd,
    /// Estimate and compare over the configured penetration rates.
    Sweep,
    /// simulate, estimate, cluster, compare and mfd in one go.
    Run,
}

fn print_report(report: &StageReport) {
    println!("{}: wrote {}", report.stage.name(), report.artifacts.join(", "));
    for note in &report.notes {
        println!("  {note}");
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let Some(path) = cli.scenario.as_deref() else {
        return Err(avaas_core::error::ScenarioError::Validation("--scenario <file> is required".into()).into());
    };
    let mut config = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(p) = cli.penetration {
        config.observers.penetration_pct = p;
    }
    let pipeline = Pipeline::new(config, cli.out, cli.workers)?;
    let reports = match cli.command {
        Command::Simulate => vec![pipeline.simulate()?],
        Command::Ingest { input } => vec![pipeline.ingest(input.as_deref())?],
        Command::Estimate => vec![pipeline.estimate()?],
        Command::Cluster => vec![pipeline.cluster()?],
        Command::Compare => vec![pipeline.compare()?],
        Command::Mfd => vec![pipeline.mfd()?],
        Command::Sweep => vec![pipeline.sweep()?],
        Command::Run => pipeline.run_all()?,
    };
    reports.iter().for_each(print_report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not failures
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
