//! `report.json` written by every command.

use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::session::SolveResidual;

/// Change of one figure when the grid step is doubled.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceDelta {
    pub quantity: String,
    pub fine: f64,
    pub coarse: f64,
    /// `|fine − coarse| / |fine|`.
    pub relative: f64,
}

impl ConvergenceDelta {
    pub fn new(quantity: impl Into<String>, fine: f64, coarse: f64) -> Self {
        Self { quantity: quantity.into(), fine, coarse, relative: ((fine - coarse) / fine).abs() }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub solves: Vec<SolveResidual>,
    pub convergence: Vec<ConvergenceDelta>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: &'static str,
    pub config: RunConfig,
    pub grid_step: f64,
    pub results: serde_json::Value,
    pub diagnostics: Diagnostics,
    /// The only field that differs between identical runs.
    pub timing: Timing,
}

impl RunReport {
    pub fn write(&self, dir: &Path) -> evatrap_core::Result<()> {
        evatrap_core::export::write_json(&dir.join("report.json"), self)
    }
}
