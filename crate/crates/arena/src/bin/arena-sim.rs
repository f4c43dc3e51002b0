use std::path::PathBuf;

use arena::sim::run::{render_report, run_experiment, write_outputs};
use arena::sim::ExperimentSpec;
use clap::{Parser, Subcommand};

/// Run simulated experiments against an in-process arena.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.txt, report.json and CSV tables.
    Run {
        /// Experiment spec (TOML). Omitted: the standard 21-model run.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Command::Run { spec, seed, out } = Cli::parse().command;
    let mut spec = match spec {
        Some(p) => ExperimentSpec::load(&p)?,
        None => ExperimentSpec::standard(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let storage = out.join("storage");
    if storage.exists() && std::fs::read_dir(&storage)?.next().is_some() {
        return Err(format!("{} is not empty; pick a fresh --out", storage.display()).into());
    }
    let outcome = run_experiment(spec, &storage).await?;
    write_outputs(&out, &outcome)?;
    print!("{}", render_report(&outcome.report));
    Ok(())
}
