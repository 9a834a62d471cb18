mod config;
mod run;

use clap::{Args, Parser, Subcommand};
use config::{Config, Experiment};
use run::{Failure, Outcome};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "heavytail", version, about = "Stable-limit experiments for additive functionals of Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary tail constants and Hill estimates of the observable.
    Tails(Common),
    /// Regeneration statistics of the coupled chain.
    Coupling(Common),
    /// Discretized operator, spectral gap and Poisson solution.
    Spectral(Common),
    /// Convergence of scaled sums to the stable limit.
    Converge(Common),
    /// Monte Carlo solution of the rescaled kinetic equation.
    Kinetic(Common),
    /// Fractional heat equation with the effective diffusivity.
    Fracdiff(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn split(&self) -> (Experiment, &Common) {
        match self {
            Command::Tails(c) => (Experiment::Tails, c),
            Command::Coupling(c) => (Experiment::Coupling, c),
            Command::Spectral(c) => (Experiment::Spectral, c),
            Command::Converge(c) => (Experiment::Converge, c),
            Command::Kinetic(c) => (Experiment::Kinetic, c),
            Command::Fracdiff(c) => (Experiment::Fracdiff, c),
        }
    }
}

fn write_outputs(dir: &Path, cfg: &Config, seed: u64, outcome: &Outcome, seconds: f64) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Runtime(format!("cannot write to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, contents) in &outcome.files {
        std::fs::write(dir.join(name), contents).map_err(io)?;
    }
    let manifest = json!({
        "experiment": cfg.experiment.name(),
        "seed": seed,
        "config": cfg.entries(),
        "versions": {
            "heavytail": heavytail::VERSION,
            "heavytail-cli": env!("CARGO_PKG_VERSION"),
        },
        "wall_time_seconds": seconds,
        "status": if outcome.gate_failure.is_some() { "FAILED" } else { "ok" },
        "outputs": outcome.files.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "summary": outcome.summary,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n").map_err(io)
}

fn execute(experiment: Experiment, args: &Common) -> Result<Option<String>, Failure> {
    let started = Instant::now();
    let mut cfg = Config::load(&args.config, experiment)?;
    if let Some(s) = args.seed {
        cfg.set("seed", s.to_string());
    }
    if let Some(w) = args.workers {
        cfg.set("workers", w.to_string());
    }
    let seed = cfg.seed()?;
    let workers = cfg.count_or("workers", 0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Failure::Runtime(e.to_string()))?;
    let outcome = pool.install(|| run::run(&cfg, seed))?;
    let dir = cfg.output_dir();
    write_outputs(&dir, &cfg, seed, &outcome, started.elapsed().as_secs_f64())?;
    for (name, _) in &outcome.files {
        println!("{}", dir.join(name).display());
    }
    Ok(outcome.gate_failure)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = cli.command.split();
    match execute(experiment, args) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(reason)) => {
            eprintln!("FAILED: {reason}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("heavytail {}: {e}", experiment.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
