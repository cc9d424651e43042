//! Mode solves shared between the commands of one run.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use evatrap_core::field::{ModalField, ModeExcitation};
use evatrap_core::geometry::WaveguideGeometry;
use evatrap_core::grid::SimulationGrid;
use evatrap_core::modes::{solve_modes_with, GuidedMode, ModeLabel, ModeSolverOptions, Polarization};
use evatrap_core::physics::AtomSpecies;
use evatrap_core::trap::{Landscape, TwoColorConfig};
use evatrap_core::{Error, Result};

use crate::config::{ConfigError, Excitation, RunConfig};

type Key = (u64, u64, u64, Polarization);

struct Solved {
    requested: usize,
    modes: Vec<Arc<GuidedMode>>,
    residual: f64,
}

pub struct Session {
    pub config: RunConfig,
    pub geometry: WaveguideGeometry,
    pub grid: SimulationGrid,
    pub atom: AtomSpecies,
    cache: Mutex<HashMap<Key, Arc<Solved>>>,
}

/// Modes to request so that `label` is among them: everything with fewer
/// nodes in both directions plus the neighbours of the same node sum.
fn needed(label: ModeLabel) -> usize {
    let (m, n) = (label.x_order as usize, label.y_order as usize);
    (m + 1) * (n + 1) + m + n
}

impl Session {
    /// `grid_step` overrides the configured step, in metres.
    pub fn new(config: RunConfig, grid_step: Option<f64>) -> std::result::Result<Self, ConfigError> {
        let grid = config.grid(grid_step)?;
        let atom = config.atom()?;
        Ok(Self { geometry: config.geometry(), grid, atom, config, cache: Mutex::new(HashMap::new()) })
    }

    /// Grid with the same extent and the given step.
    pub fn grid_with_step(&self, step: f64) -> Result<SimulationGrid> {
        self.config.grid(Some(step)).map_err(|e| Error::Config(e.0))
    }

    /// Guided modes in descending `β`, at least `count` requested.
    pub fn modes(
        &self,
        grid: &SimulationGrid,
        wavelength: f64,
        polarization: Polarization,
        count: usize,
    ) -> Result<Vec<Arc<GuidedMode>>> {
        let key = (grid.dx.to_bits(), grid.nx as u64 * 1_000_003 + grid.ny as u64, wavelength.to_bits(), polarization);
        if let Some(s) = self.cache.lock().expect("cache lock").get(&key) {
            if s.requested >= count {
                return Ok(s.modes.iter().take(count).cloned().collect());
            }
        }
        let opts = ModeSolverOptions { max_modes: count, ..Default::default() };
        let sol = solve_modes_with(&self.geometry, grid, wavelength, polarization, &opts)?;
        let solved = Arc::new(Solved {
            requested: count,
            residual: sol.max_residual,
            modes: sol.modes.into_iter().map(Arc::new).collect(),
        });
        self.cache.lock().expect("cache lock").insert(key, solved.clone());
        Ok(solved.modes.clone())
    }

    pub fn mode(&self, grid: &SimulationGrid, wavelength: f64, label: ModeLabel) -> Result<Arc<GuidedMode>> {
        self.modes(grid, wavelength, label.polarization, needed(label))?
            .into_iter()
            .find(|m| m.label == label)
            .ok_or_else(|| Error::ModeCutoff(format!("{label} at {:.1} nm", wavelength * 1e9)))
    }

    pub fn field(&self, grid: &SimulationGrid, wavelength: f64, list: &[Excitation]) -> Result<ModalField> {
        let parts = list
            .iter()
            .map(|e| ModeExcitation::new(self.mode(grid, wavelength, e.mode)?, e.power.0, e.phase.0))
            .collect::<Result<Vec<_>>>()?;
        ModalField::new(parts)
    }

    /// Two-color landscape with `red` excitations at the red wavelength.
    pub fn landscape(&self, grid: &SimulationGrid, red: &[Excitation]) -> Result<Landscape> {
        let c = &self.config;
        Landscape::new(TwoColorConfig {
            red: self.field(grid, c.red.wavelength.0, red)?,
            blue: self.field(grid, c.blue.wavelength.0, &c.blue.excitations)?,
            atom: self.atom.clone(),
            surface: c.surface_params(&self.atom),
            include_gravity: c.trap.include_gravity,
        })
    }

    /// Largest eigen-residual of every solve so far, keyed by wavelength and polarization.
    pub fn residuals(&self) -> Vec<SolveResidual> {
        let cache = self.cache.lock().expect("cache lock");
        let mut out: Vec<SolveResidual> = cache
            .iter()
            .map(|(k, s)| SolveResidual {
                grid_step: f64::from_bits(k.0),
                wavelength: f64::from_bits(k.2),
                polarization: k.3,
                modes: s.modes.len(),
                max_residual: s.residual,
            })
            .collect();
        out.sort_by(|a, b| {
            (a.grid_step, a.wavelength, a.polarization as u8)
                .partial_cmp(&(b.grid_step, b.wavelength, b.polarization as u8))
                .expect("finite keys")
        });
        out
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SolveResidual {
    pub grid_step: f64,
    pub wavelength: f64,
    pub polarization: Polarization,
    pub modes: usize,
    pub max_residual: f64,
}
