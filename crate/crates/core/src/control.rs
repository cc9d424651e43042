//! Transfer-matrix models of the mode converters in front of the trap: a
//! dual-mode Mach-Zehnder interferometer mapping TE00 onto a TE00/TE10
//! superposition, and a directional coupler turning TE10 into TE01.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Rect, Region, Structure, WaveguideGeometry};
use crate::grid::SimulationGrid;
use crate::modes::{solve_modes_with, solve_structure_modes, ModeSolverOptions, Polarization};
use crate::physics::wavenumber;
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Amplitudes in the `(TE00, TE10)` basis of the interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeVector {
    pub c0: Complex64,
    pub c1: Complex64,
}

impl ModeVector {
    pub fn new(c0: Complex64, c1: Complex64) -> Self {
        Self { c0, c1 }
    }

    /// Pure first basis mode with unit amplitude.
    pub fn fundamental() -> Self {
        Self::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn populations(&self) -> (f64, f64) {
        (self.c0.norm_sqr(), self.c1.norm_sqr())
    }

    fn apply(self, m: &Matrix2<Complex64>) -> Self {
        Self::new(m[(0, 0)] * self.c0 + m[(0, 1)] * self.c1, m[(1, 0)] * self.c0 + m[(1, 1)] * self.c1)
    }
}

/// `[[cos θ/2, i·sin θ/2], [i·sin θ/2, cos θ/2]]`.
pub fn mzi_matrix(theta: f64) -> Matrix2<Complex64> {
    let (s, c) = (0.5 * theta).sin_cos();
    let c = Complex64::new(c, 0.0);
    Matrix2::new(c, I * s, I * s, c)
}

/// `‖M·M† − I‖_max`.
pub fn unitarity_defect(m: &Matrix2<Complex64>) -> f64 {
    (m * m.adjoint() - Matrix2::identity()).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn mzi_apply(theta: f64, input: ModeVector) -> ModeVector {
    input.apply(&mzi_matrix(theta))
}

/// How the arm phase follows from the index shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// `θ = [β(n_g + Δn) − β(n_g)]·l` from two mode solves.
    #[default]
    EigenSolve,
    /// `θ ≈ 2πΔn·l·Γ_conf/λ` with the TE00 core confinement factor.
    Confinement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MziDevice {
    /// m.
    pub modulator_length: f64,
    pub index_shift: f64,
    /// m.
    pub wavelength: f64,
    /// Explicit phase, bypassing the modulator model.
    pub phase: Option<f64>,
}

impl MziDevice {
    pub fn validate(&self) -> Result<()> {
        if !(self.modulator_length > 0.0) {
            return Err(Error::Config(format!("modulator length must be positive, got {}", self.modulator_length)));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::Config(format!("MZI wavelength must be positive, got {}", self.wavelength)));
        }
        Ok(())
    }
}

/// Arm phase together with the propagation constants it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    /// rad, not reduced.
    pub theta: f64,
    pub beta_unshifted: f64,
    pub beta_shifted: f64,
    /// Core power fraction of the unshifted mode.
    pub confinement: f64,
}

/// Arm phase for `device` on the TE00 mode of `geometry`. An explicit
/// `device.phase` is returned unchanged.
pub fn modulator_phase(
    device: &MziDevice,
    geometry: &WaveguideGeometry,
    grid: &SimulationGrid,
    model: PhaseModel,
) -> Result<PhaseEstimate> {
    device.validate()?;
    let base = ModeSolverOptions { max_modes: 1, ..Default::default() };
    let sol = solve_modes_with(geometry, grid, device.wavelength, Polarization::TE, &base)?;
    let m0 = sol.modes.into_iter().next().ok_or_else(|| Error::ModeCutoff("TE00 in the MZI arm".into()))?;
    let core = geometry.core_rect();
    let total: f64 = m0.field.values.iter().map(|v| v * v).sum();
    let inside: f64 = (0..grid.ny)
        .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
        .filter(|&(i, j)| core.contains(grid.x(i), grid.y(j)))
        .map(|(i, j)| m0.field.get(i, j).powi(2))
        .sum();
    let confinement = inside / total;
    if let Some(theta) = device.phase {
        return Ok(PhaseEstimate { theta, beta_unshifted: m0.beta, beta_shifted: m0.beta, confinement });
    }
    if device.index_shift == 0.0 {
        return Ok(PhaseEstimate { theta: 0.0, beta_unshifted: m0.beta, beta_shifted: m0.beta, confinement });
    }
    let beta_shifted = match model {
        PhaseModel::Confinement => m0.beta + wavenumber(device.wavelength) * device.index_shift * confinement,
        PhaseModel::EigenSolve => {
            let shifted = geometry.with_core_index_shift(device.index_shift);
            let opts = ModeSolverOptions { initial_guess: Some(m0.field.values.clone()), ..base };
            let sol = solve_modes_with(&shifted, grid, device.wavelength, Polarization::TE, &opts)?;
            sol.modes
                .first()
                .map(|m| m.beta)
                .ok_or_else(|| Error::ModeCutoff(format!("TE00 after an index shift of {}", device.index_shift)))?
        }
    };
    Ok(PhaseEstimate {
        theta: (beta_shifted - m0.beta) * device.modulator_length,
        beta_unshifted: m0.beta,
        beta_shifted,
        confinement,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionRow {
    pub index_shift: f64,
    pub theta: f64,
    pub p0: f64,
    pub p1: f64,
}

/// Output populations for a TE00 input as the index shift is scanned.
/// Each shift is solved independently (in parallel); row order follows `shifts`.
pub fn superposition_vs_dn(
    device: &MziDevice,
    geometry: &WaveguideGeometry,
    grid: &SimulationGrid,
    model: PhaseModel,
    shifts: &[f64],
) -> Result<Vec<SuperpositionRow>> {
    shifts
        .par_iter()
        .map(|&dn| {
            let d = MziDevice { index_shift: dn, phase: None, ..device.clone() };
            let theta = modulator_phase(&d, geometry, grid, model)?.theta;
            let (p0, p1) = mzi_apply(theta, ModeVector::fundamental()).populations();
            Ok(SuperpositionRow { index_shift: dn, theta, p0, p1 })
        })
        .collect()
}

/// Two identical guides exchanging power with `κ = π/(2L_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplerDevice {
    /// m.
    pub gap: f64,
    /// Full-transfer length, m.
    pub coupling_length: f64,
}

impl CouplerDevice {
    pub fn validate(&self) -> Result<()> {
        if !(self.coupling_length > 0.0) {
            return Err(Error::Config(format!("coupling length must be positive, got {}", self.coupling_length)));
        }
        Ok(())
    }

    /// rad/m.
    pub fn kappa(&self) -> f64 {
        PI / (2.0 * self.coupling_length)
    }

    pub fn matrix(&self, z: f64) -> Matrix2<Complex64> {
        let (s, c) = (self.kappa() * z).sin_cos();
        let c = Complex64::new(c, 0.0);
        Matrix2::new(c, I * s, I * s, c)
    }
}

/// Evolves `(a, b) = (TE10, TE01)` amplitudes over a length `z ≥ 0`.
pub fn coupler_apply(device: &CouplerDevice, z: f64, input: ModeVector) -> Result<ModeVector> {
    device.validate()?;
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("coupler length must be non-negative, got {z}")));
    }
    Ok(input.apply(&device.matrix(z)))
}

/// Amplitudes of the three modes the chain touches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub te00: Complex64,
    pub te10: Complex64,
    pub te01: Complex64,
}

impl ChainState {
    pub fn launch() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self { te00: Complex64::new(1.0, 0.0), te10: zero, te01: zero }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.te00.norm_sqr() + self.te10.norm_sqr() + self.te01.norm_sqr()
    }
}

/// One device in the chain. The MZI mixes TE00 with TE10; the coupler
/// converts TE10 into TE01 and leaves TE00 alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stage {
    Mzi { theta: f64 },
    Coupler { device: CouplerDevice, length: f64 },
}

/// States after each stage, starting from `input` (not included).
pub fn run_chain(stages: &[Stage], input: ChainState) -> Result<Vec<ChainState>> {
    let mut s = input;
    let mut out = Vec::with_capacity(stages.len());
    for stage in stages {
        s = match stage {
            Stage::Mzi { theta } => {
                let v = mzi_apply(*theta, ModeVector::new(s.te00, s.te10));
                ChainState { te00: v.c0, te10: v.c1, ..s }
            }
            Stage::Coupler { device, length } => {
                let v = coupler_apply(device, *length, ModeVector::new(s.te10, s.te01))?;
                ChainState { te10: v.c0, te01: v.c1, ..s }
            }
        };
        out.push(s);
    }
    Ok(out)
}

/// The standard TE00 → MZI(θ) → full coupler chain.
pub fn standard_chain(theta: f64, coupler: &CouplerDevice) -> Vec<Stage> {
    vec![Stage::Mzi { theta }, Stage::Coupler { device: coupler.clone(), length: coupler.coupling_length }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermodeEstimate {
    /// The four first-order supermode propagation constants, descending.
    pub betas: Vec<f64>,
    /// rad/m.
    pub kappa: f64,
    pub coupling_length: f64,
}

/// Order-of-magnitude `κ` from the supermodes of two cores offset by
/// `(w + gap, w + gap)`, one above and beside the other, in vacuum.
///
/// The four first-order modes (TE10 and TE01 of each core) split into two
/// pairs; `κ` is a quarter of the summed pair splittings.
pub fn supermode_coupling(
    geometry: &WaveguideGeometry,
    gap: f64,
    wavelength: f64,
    step: f64,
    extent: f64,
) -> Result<SupermodeEstimate> {
    geometry.validate()?;
    let (w, h) = (geometry.core_width, geometry.core_height);
    let off = 0.5 * (w + gap);
    let core = |cx: f64, cy: f64| Rect::new(cx - 0.5 * w, cx + 0.5 * w, cy - 0.5 * h, cy + 0.5 * h);
    let a = core(-off, -off);
    let b = core(off, off);
    let structure = Structure {
        background: geometry.clad_index,
        regions: vec![Region { rect: a, index: geometry.core_index }, Region { rect: b, index: geometry.core_index }],
    };
    let n = (extent / step).round() as usize;
    let grid = SimulationGrid::new(n, n, step, step, -0.5 * extent, -0.5 * extent)?;
    let opts = ModeSolverOptions { max_modes: 6, ..Default::default() };
    let sol = solve_structure_modes(&structure, a, geometry.clad_index, &grid, wavelength, Polarization::TE, &opts)?;
    if sol.modes.len() < 6 {
        return Err(Error::ModeCutoff(format!("only {} supermodes guided", sol.modes.len())));
    }
    let betas: Vec<f64> = sol.modes[2..6].iter().map(|m| m.beta).collect();
    let kappa = 0.25 * ((betas[0] - betas[3]) + (betas[1] - betas[2]));
    Ok(SupermodeEstimate { betas, kappa, coupling_length: PI / (2.0 * kappa) })
}
