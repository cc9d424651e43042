//! Run configuration: TOML with explicit units, parsed into SI.

use std::path::{Path, PathBuf};

use evatrap_core::control::{CouplerDevice, MziDevice, PhaseModel, Stage};
use evatrap_core::geometry::WaveguideGeometry;
use evatrap_core::grid::SimulationGrid;
use evatrap_core::modes::{ModeLabel, Polarization};
use evatrap_core::physics::AtomSpecies;
use evatrap_core::trap::{LatticeOptions, SurfaceParams};
use serde::{Deserialize, Serialize};

use crate::units::{Angle, Length, Power};

/// A configuration file that failed to parse or validate.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    pub geometry: GeometrySection,
    pub grid: GridSection,
    #[serde(default)]
    pub atom: AtomSection,
    #[serde(default)]
    pub surface: SurfaceSection,
    #[serde(default)]
    pub trap: TrapSection,
    pub red: BeamSection,
    pub blue: BeamSection,
    #[serde(default)]
    pub modes: ModesSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub bpm: BpmSection,
    #[serde(default)]
    pub mzi: MziSection,
    #[serde(default)]
    pub coupler: CouplerSection,
    #[serde(default)]
    pub chain: ChainSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Default output directory; `--out` and `EVATRAP_OUT` take precedence.
    pub output_dir: Option<PathBuf>,
    /// Repeat the main solve on a grid with twice the step and report the change.
    pub convergence_check: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { output_dir: None, convergence_check: true }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub core_width: Length,
    pub core_height: Length,
    pub core_index: f64,
    pub substrate_index: f64,
    #[serde(default = "one")]
    pub clad_index: f64,
    /// Height of the substrate pedestal under the core.
    #[serde(default)]
    pub substrate_step: Length,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub step: Length,
    pub width: Length,
    pub height: Length,
    /// Vacuum kept above the core's top face.
    pub margin_above: Length,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomSection {
    pub species: String,
    pub c3_factor: Option<f64>,
}

impl Default for AtomSection {
    fn default() -> Self {
        Self { species: "Rb87".into(), c3_factor: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    pub enabled: bool,
    pub permittivity: f64,
    /// Defaults to the atom's D2 wavelength.
    pub reference_wavelength: Option<Length>,
    /// Permittivities for the depth sensitivity table of `guide`.
    pub sensitivity: Vec<f64>,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self { enabled: true, permittivity: 3.42f64 * 3.42, reference_wavelength: None, sensitivity: vec![2.1, 11.7] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapSection {
    pub include_gravity: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Excitation {
    pub mode: ModeLabel,
    pub power: Power,
    #[serde(default)]
    pub phase: Angle,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub wavelength: Length,
    pub excitations: Vec<Excitation>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesSection {
    /// Empty means the red and blue wavelengths.
    pub wavelengths: Vec<Length>,
    pub polarizations: Vec<Polarization>,
    pub max_modes: usize,
    pub dump_fields: bool,
}

impl Default for ModesSection {
    fn default() -> Self {
        Self { wavelengths: vec![], polarizations: vec![Polarization::TE], max_modes: 4, dump_fields: true }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySection {
    pub start: Length,
    pub stop: Length,
    pub points: usize,
    pub labels: Vec<ModeLabel>,
    /// Modes whose decay lengths define `α_L` at the red/blue wavelengths.
    pub red_mode: ModeLabel,
    pub blue_mode: ModeLabel,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self {
            start: Length(700e-9),
            stop: Length(900e-9),
            points: 21,
            labels: vec![ModeLabel::TE00, ModeLabel::TE01, ModeLabel::TM00],
            red_mode: ModeLabel::TE01,
            blue_mode: ModeLabel::TE00,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub red_powers: Vec<Power>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { red_powers: [0.5e-3, 1.0e-3, 1.5e-3, 2.0e-3, 2.5e-3].map(Power).to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    /// Red excitations replacing `[red]` for the lattice.
    pub excitations: Vec<Excitation>,
    pub stations_per_period: usize,
    pub lateral_margin: Length,
    /// MZI phases for the guide-to-lattice sweep; empty skips it.
    pub transition_thetas: Vec<Angle>,
    /// Height above the core top where the transition corrugation is probed.
    pub probe_standoff: Length,
}

impl Default for LatticeSection {
    fn default() -> Self {
        let o = LatticeOptions::default();
        let half = |mode| Excitation { mode, power: Power(0.75e-3), phase: Angle(0.0) };
        Self {
            excitations: vec![half(ModeLabel::TE00), half(ModeLabel::TE01)],
            stations_per_period: o.stations_per_period,
            lateral_margin: Length(o.lateral_margin),
            transition_thetas: vec![],
            probe_standoff: Length(0.09e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpmSection {
    /// Transverse step of the propagation grid; defaults to the main grid.
    pub grid_step: Option<Length>,
    /// Launched red modes; empty means `[lattice].excitations`.
    pub launch: Vec<Excitation>,
    pub dz: Length,
    pub z_extent: Length,
    /// Defaults to the power-weighted effective index of the launch.
    pub reference_index: Option<f64>,
    pub absorber_width: Length,
    pub absorber_strength: f64,
    pub snapshots: Vec<Length>,
    /// `[x, y]` points traced at every step.
    pub probes: Vec<[Length; 2]>,
}

impl Default for BpmSection {
    fn default() -> Self {
        Self {
            grid_step: None,
            launch: vec![],
            dz: Length(20e-9),
            z_extent: Length(10e-6),
            reference_index: None,
            absorber_width: Length(0.3e-6),
            absorber_strength: 0.3,
            snapshots: vec![],
            probes: vec![[Length(0.0), Length(40e-9)]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MziSection {
    pub modulator_length: Length,
    pub wavelength: Length,
    pub index_shifts: Vec<f64>,
    pub phase_model: PhaseModel,
    /// Mode-solver step for the arm; defaults to the main grid.
    pub grid_step: Option<Length>,
    /// Population curve over `Δn ∈ [0, curve_max_shift]`; zero points skips it.
    pub curve_max_shift: f64,
    pub curve_points: usize,
}

impl Default for MziSection {
    fn default() -> Self {
        Self {
            modulator_length: Length(50e-6),
            wavelength: Length(1.06e-6),
            index_shifts: vec![0.01012, 0.00506],
            phase_model: PhaseModel::EigenSolve,
            grid_step: None,
            curve_max_shift: 0.0203,
            curve_points: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplerSection {
    pub gap: Length,
    pub coupling_length: Length,
    /// Samples of the transfer curve over `[0, 2L_c]`.
    pub points: usize,
    /// Estimate κ from supermodes of the two-core cross-section.
    pub supermode: bool,
    pub supermode_step: Length,
    pub supermode_extent: Length,
}

impl Default for CouplerSection {
    fn default() -> Self {
        Self {
            gap: Length(42e-9),
            coupling_length: Length(24.38e-6),
            points: 41,
            supermode: false,
            supermode_step: Length(3e-9),
            supermode_extent: Length(1.8e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageSpec {
    Mzi { theta: Angle },
    /// Length defaults to the coupling length.
    Coupler { length: Option<Length> },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub stages: Vec<StageSpec>,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self { stages: vec![StageSpec::Mzi { theta: Angle(std::f64::consts::FRAC_PI_2) }, StageSpec::Coupler { length: None }] }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// The configuration bundled with the binary.
    pub fn bundled() -> Self {
        Self::from_toml(include_str!("../configs/reference.cfg")).expect("bundled configuration is valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let core = |e: evatrap_core::Error| ConfigError(e.to_string());
        self.geometry().validate().map_err(core)?;
        self.grid(None)?;
        let atom = self.atom()?;
        self.surface_params(&atom).validate().map_err(core)?;
        for (name, beam) in [("red", &self.red), ("blue", &self.blue)] {
            if !(beam.wavelength.0 > 0.0) {
                return bad(format!("[{name}] wavelength must be positive"));
            }
            check_excitations(name, &beam.excitations)?;
        }
        if self.blue.excitations.is_empty() {
            return bad("[blue] needs at least one excitation");
        }
        check_excitations("lattice", &self.lattice.excitations)?;
        check_excitations("bpm", &self.bpm.launch)?;
        if self.sweep.red_powers.iter().any(|p| !(p.0 >= 0.0)) {
            return bad("[sweep] red powers must be non-negative");
        }
        if self.decay.points < 1 || !(self.decay.start.0 > 0.0 && self.decay.stop.0 >= self.decay.start.0) {
            return bad("[decay] needs 0 < start ≤ stop and at least one point");
        }
        if self.modes.max_modes == 0 || self.modes.polarizations.is_empty() {
            return bad("[modes] needs max_modes ≥ 1 and at least one polarization");
        }
        if self.lattice.stations_per_period < 8 {
            return bad("[lattice] stations_per_period must be at least 8");
        }
        if !(self.bpm.dz.0 > 0.0 && self.bpm.z_extent.0 >= self.bpm.dz.0) {
            return bad("[bpm] needs dz > 0 and z_extent ≥ dz");
        }
        for s in self.bpm.grid_step.iter().chain(&self.mzi.grid_step) {
            if !(s.0 > 0.0) {
                return bad("grid steps must be positive");
            }
        }
        self.mzi_device(0.0).validate().map_err(core)?;
        self.coupler_device().validate().map_err(core)?;
        if self.coupler.points < 2 {
            return bad("[coupler] points must be at least 2");
        }
        Ok(())
    }

    pub fn geometry(&self) -> WaveguideGeometry {
        let g = &self.geometry;
        WaveguideGeometry {
            core_width: g.core_width.0,
            core_height: g.core_height.0,
            core_index: g.core_index,
            substrate_index: g.substrate_index,
            clad_index: g.clad_index,
            substrate_step_height: g.substrate_step.0,
        }
    }

    /// Simulation grid, optionally with a different step.
    pub fn grid(&self, step: Option<f64>) -> Result<SimulationGrid, ConfigError> {
        let g = &self.grid;
        let step = step.unwrap_or(g.step.0);
        SimulationGrid::centered(step, g.width.0, g.height.0, g.margin_above.0)
            .map_err(|e| ConfigError(format!("[grid] {e}")))
    }

    pub fn atom(&self) -> Result<AtomSpecies, ConfigError> {
        let mut atom = match self.atom.species.as_str() {
            "Rb87" | "87Rb" => AtomSpecies::rubidium_87(),
            other => return bad(format!("[atom] unknown species {other:?}; only Rb87 is tabulated")),
        };
        if let Some(k) = self.atom.c3_factor {
            atom.c3_factor = k;
        }
        atom.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(atom)
    }

    pub fn surface_params(&self, atom: &AtomSpecies) -> SurfaceParams {
        if !self.surface.enabled {
            return SurfaceParams::disabled();
        }
        SurfaceParams {
            permittivity: self.surface.permittivity,
            reference_wavelength: self.surface.reference_wavelength.map_or(atom.d2_wavelength, |l| l.0),
            enabled: true,
        }
    }

    pub fn lattice_options(&self) -> LatticeOptions {
        LatticeOptions {
            stations_per_period: self.lattice.stations_per_period,
            lateral_margin: self.lattice.lateral_margin.0,
        }
    }

    pub fn mzi_device(&self, index_shift: f64) -> MziDevice {
        MziDevice {
            modulator_length: self.mzi.modulator_length.0,
            index_shift,
            wavelength: self.mzi.wavelength.0,
            phase: None,
        }
    }

    pub fn coupler_device(&self) -> CouplerDevice {
        CouplerDevice { gap: self.coupler.gap.0, coupling_length: self.coupler.coupling_length.0 }
    }

    pub fn chain_stages(&self) -> Vec<Stage> {
        let device = self.coupler_device();
        self.chain
            .stages
            .iter()
            .map(|s| match s {
                StageSpec::Mzi { theta } => Stage::Mzi { theta: theta.0 },
                StageSpec::Coupler { length } => Stage::Coupler {
                    device: device.clone(),
                    length: length.map_or(device.coupling_length, |l| l.0),
                },
            })
            .collect()
    }
}

fn check_excitations(section: &str, list: &[Excitation]) -> Result<(), ConfigError> {
    for (k, e) in list.iter().enumerate() {
        if !(e.power.0 >= 0.0) {
            return bad(format!("[{section}] excitation {k}: power must be non-negative"));
        }
        if list[..k].iter().any(|o| o.mode == e.mode) {
            return bad(format!("[{section}] mode {} listed twice", e.mode));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_is_the_soi_guide() {
        let c = RunConfig::bundled();
        assert_eq!(c.geometry(), WaveguideGeometry::soi_default());
        let atom = c.atom().unwrap();
        let s = c.surface_params(&atom);
        assert!((s.reference_wavelength - atom.d2_wavelength).abs() < 1e-15);
        assert!((s.permittivity - 3.42 * 3.42).abs() < 1e-12);
        assert_eq!(c.grid(None).unwrap().nx, 600);
        assert_eq!(c.sweep.red_powers.len(), 5);
        assert_eq!(c.chain_stages().len(), 2);
    }

    #[test]
    fn duplicated_modes_are_rejected() {
        let text = include_str!("../configs/reference.cfg").replace(
            r#"excitations = [{ mode = "TE01", power = "1.5 mW" }]"#,
            r#"excitations = [{ mode = "TE01", power = "1.5 mW" }, { mode = "TE01", power = "1 mW" }]"#,
        );
        assert!(RunConfig::from_toml(&text).unwrap_err().0.contains("twice"));
    }
}
