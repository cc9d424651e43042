//! Physical constants, alkali line data and elementary per-atom formulas.
//!
//! Detunings follow `Δ = ω_light − ω_line` literally, so light red of a line
//! has `Δ < 0` and produces an attractive (negative) dipole potential through
//! `U ∝ Γ/Δ · I`. Blue-detuned light gives `Δ > 0` and a repulsive potential.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// CODATA 2018 values in SI units.
pub mod constants {
    /// Speed of light in vacuum, m/s (exact).
    pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
    /// Reduced Planck constant, J·s (exact).
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Vacuum permittivity, F/m.
    pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
    /// Boltzmann constant, J/K (exact).
    pub const BOLTZMANN: f64 = 1.380_649e-23;
    /// Standard acceleration of gravity, m/s² (exact).
    pub const STANDARD_GRAVITY: f64 = 9.806_65;
    /// Unified atomic mass unit, kg.
    pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
}

use constants::*;

/// Converts an energy in joules to the equivalent temperature in μK.
pub fn joules_to_microkelvin(energy: f64) -> f64 {
    energy / BOLTZMANN * 1e6
}

pub fn microkelvin_to_joules(temperature: f64) -> f64 {
    temperature * 1e-6 * BOLTZMANN
}

/// Angular frequency `2πc/λ` of light with vacuum wavelength `λ`.
pub fn angular_frequency(wavelength: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / wavelength
}

/// Vacuum wavenumber `2π/λ`.
pub fn wavenumber(wavelength: f64) -> f64 {
    2.0 * PI / wavelength
}

/// Two-line (D1/D2) alkali atom.
///
/// Linewidths are spontaneous decay rates in s⁻¹. For ⁸⁷Rb these are
/// 36.1×10⁶ s⁻¹ (D1) and 38.1×10⁶ s⁻¹ (D2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    pub name: String,
    /// Mass in kg.
    pub mass: f64,
    /// Vacuum wavelength of the `S1/2 → P1/2` line, m.
    pub d1_wavelength: f64,
    /// Vacuum wavelength of the `S1/2 → P3/2` line, m.
    pub d2_wavelength: f64,
    pub gamma_d1: f64,
    pub gamma_d2: f64,
    /// Dimensionless prefactor of the surface coefficient `C3 = k·ħΓ`.
    pub c3_factor: f64,
}

impl AtomSpecies {
    pub fn rubidium_87() -> Self {
        Self {
            name: "Rb87".to_string(),
            mass: 86.909_180_531 * ATOMIC_MASS_UNIT,
            d1_wavelength: 794.978_851e-9,
            d2_wavelength: 780.241_209e-9,
            gamma_d1: 36.1e6,
            gamma_d2: 38.1e6,
            c3_factor: 0.113,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && self.gamma_d1 > 0.0
            && self.gamma_d2 > 0.0
            && self.d2_wavelength > 0.0
            && self.d2_wavelength < self.d1_wavelength
            && self.c3_factor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent atom data for {}", self.name)))
        }
    }

    /// Angular frequency of the D2 line, used as `ω₀` in dipole prefactors.
    pub fn reference_angular_frequency(&self) -> f64 {
        angular_frequency(self.d2_wavelength)
    }

    /// Signed detunings `(Δ_D1, Δ_D2)` in rad/s for light at `wavelength`.
    pub fn detunings(&self, wavelength: f64) -> Result<(f64, f64)> {
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::Domain(format!("wavelength must be positive, got {wavelength}")));
        }
        let omega = angular_frequency(wavelength);
        let d1 = omega - angular_frequency(self.d1_wavelength);
        let d2 = omega - angular_frequency(self.d2_wavelength);
        // Treat anything within a part in 10¹² of the optical frequency as on resonance.
        let eps = 1e-12 * omega;
        if d1.abs() <= eps {
            return Err(Error::Resonance { wavelength, line: "D1" });
        }
        if d2.abs() <= eps {
            return Err(Error::Resonance { wavelength, line: "D2" });
        }
        Ok((d1, d2))
    }

    /// Mass times gravitational acceleration, J/m.
    pub fn weight(&self) -> f64 {
        self.mass * STANDARD_GRAVITY
    }
}

/// Photon recoil energy `(ħk)²/2m` in joules.
pub fn recoil_energy(atom: &AtomSpecies, wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::Domain(format!("wavelength must be positive, got {wavelength}")));
    }
    let momentum = HBAR * wavenumber(wavelength);
    Ok(momentum * momentum / (2.0 * atom.mass))
}

/// Fine-structure weighted `Γ/Δ`: `Γ₁/₂/(3Δ₁/₂) + 2Γ₃/₂/(3Δ₃/₂)`.
///
/// Negative for red detuning, positive for blue detuning of both lines.
pub fn fine_structure_detuning_factor(atom: &AtomSpecies, wavelength: f64) -> Result<f64> {
    let (d1, d2) = atom.detunings(wavelength)?;
    Ok(atom.gamma_d1 / (3.0 * d1) + 2.0 * atom.gamma_d2 / (3.0 * d2))
}

/// Line-weighted `(Γ/Δ)²` used for photon scattering:
/// `Γ₁/₂²/(3Δ₁/₂²) + 2Γ₃/₂²/(3Δ₃/₂²)`.
pub fn fine_structure_scattering_factor(atom: &AtomSpecies, wavelength: f64) -> Result<f64> {
    let (d1, d2) = atom.detunings(wavelength)?;
    Ok(atom.gamma_d1.powi(2) / (3.0 * d1 * d1) + 2.0 * atom.gamma_d2.powi(2) / (3.0 * d2 * d2))
}
