use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use market_sim::harness::{run_experiment, write_outputs, ExperimentSpec, HarnessError};

#[derive(Parser)]
#[command(name = "market-sim", version, about = "Proportional-share and market CPU allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the utility-vs-load sweep (defaults unless a config is given).
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the default sweep config as JSON.
    Defaults,
}

#[derive(Args)]
struct Common {
    /// Output directory for runs.csv and agg.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated interarrival means (seconds), replacing the config's sweep.
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    /// Use seeds 1..=N.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn load(path: &PathBuf) -> Result<ExperimentSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    ExperimentSpec::from_json(&text)
        .with_context(|| format!("in {}", path.display()))
        .map_err(Failure::Config)
}

fn execute(mut spec: ExperimentSpec, common: Common) -> Result<(), Failure> {
    if let Some(mu) = common.mu {
        spec.sweep = mu;
    }
    if let Some(n) = common.seeds {
        spec.seeds = (1..=n).collect();
    }
    if let Some(out) = common.out {
        spec.output = out;
    }
    let jobs = spec.jobs().len();
    let started = std::time::Instant::now();
    let result = run_experiment(&spec)?;
    write_outputs(&result, &spec.output)?;
    if !common.quiet {
        eprintln!(
            "{jobs} runs in {:.1}s -> {}",
            started.elapsed().as_secs_f64(),
            spec.output.display()
        );
        for a in &result.agg {
            eprintln!(
                "{:<18} {:<17} mu={:>6}  utility/host/s={:.5} (sd {:.5})",
                a.cell.mechanism.to_string(),
                a.cell.behavior.to_string(),
                a.mu,
                a.mean_utility_per_host.mean,
                a.mean_utility_per_host.std
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, common } => load(&config).and_then(|s| execute(s, common)),
        Command::Sweep { config, common } => {
            let spec = match config {
                Some(path) => load(&path),
                None => Ok(ExperimentSpec::figure(30)),
            };
            spec.and_then(|s| execute(s, common))
        }
        Command::Defaults => {
            let spec = ExperimentSpec::figure(30);
            println!("{}", serde_json::to_string_pretty(&spec).expect("spec serializes"));
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
