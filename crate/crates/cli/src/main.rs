use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sepwalk::run::RunError;
use sepwalk::{exit, run, write_artifacts, Config, Mode, Overrides};
use sepwalk_core::stats::StatsError;

/// Simulate a random walk on the symmetric exclusion process and estimate its
/// speed, diffusivity, large deviations and linear response.
#[derive(Debug, Parser)]
#[command(name = "sepwalk", version)]
struct Cli {
    /// speed | blocks | clt | ldp | density | einstein | oracle
    mode: String,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    eps_confirm: Option<f64>,
    #[arg(long)]
    probe_rate: Option<f64>,
    #[arg(long)]
    censoring_budget: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it. Defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(real_main(cli) as u8)
}

fn real_main(cli: Cli) -> i32 {
    let overrides = Overrides {
        seed: cli.seed,
        replicas: cli.replicas,
        horizon: cli.horizon,
        eps_confirm: cli.eps_confirm,
        probe_rate: cli.probe_rate,
        censoring_budget: cli.censoring_budget,
        out: cli.out,
    };
    let cfg = match cli.mode.parse::<Mode>().and_then(|m| Config::load(&cli.config, Some(m), overrides)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sepwalk: configuration error: {e}");
            return exit::CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("sepwalk: cannot start worker threads: {e}");
            return exit::FAILURE;
        }
    };
    let outcome = match pool.install(|| run(&cfg)) {
        Ok(o) => o,
        Err(RunError::Stats(e @ StatsError::InsufficientBlocks { .. })) => {
            eprintln!("sepwalk: horizon exhausted: {e}");
            return exit::CENSORED;
        }
        Err(e) => {
            eprintln!("sepwalk: {e}");
            return exit::FAILURE;
        }
    };
    if let Err(e) = write_artifacts(&cfg, &outcome) {
        eprintln!("sepwalk: cannot write artifacts to {}: {e}", cfg.out.display());
        return exit::FAILURE;
    }
    if outcome.censoring.exceeded() {
        eprintln!(
            "sepwalk: horizon exhausted: a fraction {:.3} of replicas lose a block to the horizon (budget {})",
            outcome.censoring.fraction, outcome.censoring.budget
        );
        return exit::CENSORED;
    }
    if outcome.oracle_failed() {
        eprintln!("sepwalk: lazy and full-state engines disagree; see {}", cfg.out.join("report.txt").display());
        return exit::FAILURE;
    }
    println!("{}", cfg.out.join("report.txt").display());
    exit::OK
}
