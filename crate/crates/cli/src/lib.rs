//! Front-end for `evatrap`: configuration, per-command drivers and reports.

pub mod commands;
pub mod config;
pub mod report;
pub mod session;
pub mod units;

use std::path::Path;
use std::time::Instant;

use serde_json::json;

use commands::{Command, Outcome};
use config::ConfigError;
use report::{Diagnostics, RunReport, Timing};
use session::Session;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_NO_TRAP: u8 = 4;

/// Process exit code for a failed run.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use evatrap_core::Error as E;
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::Domain(_) | E::Resonance { .. } | E::Composition(_)) => EXIT_CONFIG,
        Some(E::NoConvergence { .. } | E::LinearAlgebra(_) | E::Fit(_) | E::ModeCutoff(_) | E::Unstable { .. }) => {
            EXIT_SOLVER
        }
        Some(E::NoTrapMinimum(_) | E::InvalidTrap(_)) => EXIT_NO_TRAP,
        _ => EXIT_OTHER,
    }
}

fn report(cmd: &str, s: &Session, o: Outcome, started: Instant) -> RunReport {
    RunReport {
        command: cmd.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        config: s.config.clone(),
        grid_step: s.grid.dx,
        results: o.results,
        diagnostics: Diagnostics { solves: s.residuals(), convergence: o.convergence, warnings: o.warnings },
        timing: Timing { wall_seconds: started.elapsed().as_secs_f64(), threads: rayon::current_num_threads() },
    }
}

/// Runs `cmd`, writes its files and `report.json` into `out`, and returns
/// the report with the stdout summary lines.
pub fn execute(cmd: Command, s: &Session, out: &Path) -> anyhow::Result<(RunReport, Vec<String>)> {
    let started = Instant::now();
    if cmd == Command::Reproduce {
        return reproduce(s, out, started);
    }
    let mut o = commands::run(cmd, s, out)?;
    let summary = std::mem::take(&mut o.summary);
    let r = report(cmd.name(), s, o, started);
    r.write(out)?;
    Ok((r, summary))
}

const ALL: [Command; 7] =
    [Command::Modes, Command::Decay, Command::Guide, Command::Sweep, Command::Lattice, Command::Bpm, Command::Mzi];

/// Every command into its own subdirectory, sharing mode solves. A failing
/// command is recorded and the rest still run; the first failure is returned
/// after the summary report is written.
fn reproduce(s: &Session, out: &Path, started: Instant) -> anyhow::Result<(RunReport, Vec<String>)> {
    std::fs::create_dir_all(out)?;
    let mut results = serde_json::Map::new();
    let mut summary = Vec::new();
    let mut warnings = Vec::new();
    let mut first_err = None;
    for cmd in ALL {
        summary.push(format!("== {}", cmd.name()));
        match execute(cmd, s, &out.join(cmd.name())) {
            Ok((r, lines)) => {
                summary.extend(lines);
                warnings.extend(r.diagnostics.warnings.iter().map(|w| format!("{}: {w}", cmd.name())));
                results.insert(cmd.name().into(), r.results);
            }
            Err(e) => {
                summary.push(format!("failed: {e}"));
                results.insert(cmd.name().into(), json!({ "error": e.to_string() }));
                first_err.get_or_insert(e);
            }
        }
    }
    let o = Outcome { results: results.into(), warnings, ..Default::default() };
    let r = report("reproduce", s, o, started);
    r.write(out)?;
    std::fs::write(out.join("summary.txt"), summary.join("\n") + "\n")?;
    match first_err {
        Some(e) => Err(e),
        None => Ok((r, summary)),
    }
}
