use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use evatrap_cli::commands::Command;
use evatrap_cli::config::RunConfig;
use evatrap_cli::session::Session;
use evatrap_cli::{execute, exit_code};

/// Two-color evanescent-field atom guide and lattice simulator.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// Run configuration (TOML with unit strings). Defaults to the bundled one.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, env = "EVATRAP_OUT")]
    out: Option<PathBuf>,

    /// Worker threads for grid and sweep parallelism.
    #[arg(long)]
    threads: Option<usize>,

    /// Overrides the configured grid step, in nm.
    #[arg(long)]
    grid_step: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    faer::set_global_parallelism(faer::Par::Seq);
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting the worker pool")?;
    }
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::bundled(),
    };
    if let Some(nm) = cli.grid_step {
        if !(nm > 0.0) {
            return Err(evatrap_cli::config::ConfigError(format!("--grid-step must be positive, got {nm}")).into());
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("evatrap-out"));
    let session = Session::new(config, cli.grid_step.map(|nm| nm * 1e-9))?;
    let (report, summary) = execute(cli.command, &session, &out)?;
    for line in summary {
        println!("{line}");
    }
    for w in &report.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", out.join("report.json").display());
    Ok(())
}

