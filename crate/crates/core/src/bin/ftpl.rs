use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ftpl::experiment::{load_config, run, validate, ExperimentConfig};
use ftpl::Error;

#[derive(Parser)]
#[command(version, about = "Run FTPL experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overriding `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment and write its CSV files and manifest.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn load(cli: &Cli, path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let mut cfg = load_config(path)?;
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main_inner(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Validate { config } => {
            let warnings = validate(&load(cli, config)?)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            match warnings.into_iter().next() {
                Some(w) => Err(Error::config(w.path, "run would refuse this config")),
                None => {
                    println!("ok: {}", config.display());
                    Ok(())
                }
            }
        }
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let workers = cli
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
                .max(1);
            let outcome = run(&cfg, workers)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for c in &outcome.outputs.checks {
                println!(
                    "{} {}: {} passed, {} failed, {} not applicable",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.check,
                    c.passed,
                    c.failed,
                    c.not_applicable
                );
            }
            let failed = outcome.outputs.failed_checks();
            if failed.is_empty() {
                Ok(())
            } else {
                let names: Vec<&str> = failed.iter().map(|c| c.check.as_str()).collect();
                Err(Error::CheckFailed(names.join(", ")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
