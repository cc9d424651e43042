#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use evatrap_core::field::{ModalField, ModeExcitation};
use evatrap_core::geometry::WaveguideGeometry;
use evatrap_core::grid::SimulationGrid;
use evatrap_core::modes::{solve_modes, GuidedMode, ModeLabel, Polarization};
use evatrap_core::physics::AtomSpecies;
use evatrap_core::trap::{Landscape, SurfaceParams, TwoColorConfig};

pub struct SoiModes {
    pub grid: SimulationGrid,
    pub red: Vec<Arc<GuidedMode>>,
    pub blue: Arc<GuidedMode>,
}

impl SoiModes {
    pub fn red(&self, label: ModeLabel) -> Arc<GuidedMode> {
        self.red.iter().find(|m| m.label == label).expect("mode present").clone()
    }
}

fn solve(step: f64) -> SoiModes {
    faer::set_global_parallelism(faer::Par::Seq);
    let geo = WaveguideGeometry::soi_default();
    let grid = SimulationGrid::centered(step, 3e-6, 3e-6, 1.35e-6).unwrap();
    let red = solve_modes(&geo, &grid, 865e-9, Polarization::TE, 3).unwrap();
    let blue = solve_modes(&geo, &grid, 700e-9, Polarization::TE, 1).unwrap();
    SoiModes { grid, red: red.into_iter().map(Arc::new).collect(), blue: Arc::new(blue[0].clone()) }
}

/// 865/700 nm modes of the default guide on a 10 nm grid.
pub fn fine() -> &'static SoiModes {
    static M: OnceLock<SoiModes> = OnceLock::new();
    M.get_or_init(|| solve(10e-9))
}

/// Same on a 20 nm grid.
pub fn coarse() -> &'static SoiModes {
    static M: OnceLock<SoiModes> = OnceLock::new();
    M.get_or_init(|| solve(20e-9))
}

pub fn field(parts: &[(Arc<GuidedMode>, f64, f64)]) -> ModalField {
    ModalField::new(parts.iter().map(|(m, p, t)| ModeExcitation::new(m.clone(), *p, *t).unwrap()).collect()).unwrap()
}

/// Two-color landscape with the given red excitations and 40 mW of blue TE00.
pub fn landscape(m: &SoiModes, red: &[(ModeLabel, f64, f64)], surface: bool) -> Landscape {
    let atom = AtomSpecies::rubidium_87();
    let red: Vec<_> = red.iter().map(|(l, p, t)| (m.red(*l), *p, *t)).collect();
    Landscape::new(TwoColorConfig {
        red: field(&red),
        blue: field(&[(m.blue.clone(), 40e-3, 0.0)]),
        surface: if surface { SurfaceParams::silicon(&atom) } else { SurfaceParams::disabled() },
        atom,
        include_gravity: false,
    })
    .unwrap()
}
