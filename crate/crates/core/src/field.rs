//! Modal superpositions `φ = Σ C_n E_n(x, y) e^{i(β_n z + θ_n)}` and the
//! intensity `I = ½ε₀c|φ|²` they produce.
//!
//! Modes carry 1 W at unit amplitude, so `C_n = √P_n` puts `P_n` watts into
//! mode `n`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::grid::FieldMap;
use crate::modes::GuidedMode;
use crate::physics::constants::{SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};
use crate::{Error, Result};

/// `½ε₀c`, converting `|E|²` in V²/m² to W/m².
pub const INTENSITY_FACTOR: f64 = 0.5 * VACUUM_PERMITTIVITY * SPEED_OF_LIGHT;

#[derive(Debug, Clone)]
pub struct ModeExcitation {
    pub mode: Arc<GuidedMode>,
    /// W.
    pub power: f64,
    /// rad.
    pub phase: f64,
}

impl ModeExcitation {
    pub fn new(mode: Arc<GuidedMode>, power: f64, phase: f64) -> Result<Self> {
        if !(power >= 0.0) || !power.is_finite() {
            return Err(Error::Config(format!("excitation power must be non-negative, got {power}")));
        }
        Ok(Self { mode, power, phase })
    }

    /// `C = √P·e^{iθ}`.
    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.power.sqrt(), self.phase)
    }
}

/// A set of co-propagating excitations sharing one grid and wavelength.
#[derive(Debug, Clone)]
pub struct ModalField {
    excitations: Vec<ModeExcitation>,
}

impl ModalField {
    pub fn new(excitations: Vec<ModeExcitation>) -> Result<Self> {
        if let Some(first) = excitations.first() {
            let (g, lambda) = (first.mode.field.grid, first.mode.wavelength);
            for e in &excitations[1..] {
                if e.mode.field.grid != g {
                    return Err(Error::Composition("excited modes live on different grids".into()));
                }
                if (e.mode.wavelength - lambda).abs() > 1e-12 * lambda {
                    return Err(Error::Composition(format!(
                        "mixed wavelengths {:.4e} m and {:.4e} m in one superposition",
                        lambda, e.mode.wavelength
                    )));
                }
            }
        }
        Ok(Self { excitations })
    }

    pub fn excitations(&self) -> &[ModeExcitation] {
        &self.excitations
    }

    pub fn is_empty(&self) -> bool {
        self.excitations.iter().all(|e| e.power == 0.0)
    }

    pub fn wavelength(&self) -> Option<f64> {
        self.excitations.first().map(|e| e.mode.wavelength)
    }

    /// Total launched power, W.
    pub fn total_power(&self) -> f64 {
        self.excitations.iter().map(|e| e.power).sum()
    }

    /// Same excitations with every power multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let excitations =
            self.excitations.iter().map(|e| ModeExcitation { power: e.power * s, ..e.clone() }).collect();
        Self { excitations }
    }

    /// True when more than one mode carries power, i.e. the intensity
    /// depends on `z`.
    pub fn is_z_modulated(&self) -> bool {
        let lit: Vec<_> = self.excitations.iter().filter(|e| e.power > 0.0).collect();
        lit.iter().any(|e| (e.mode.beta - lit[0].mode.beta).abs() > 0.0)
    }

    /// Complex field at `(x, y, z)` from bicubic samples of each mode.
    pub fn field_at(&self, x: f64, y: f64, z: f64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for e in &self.excitations {
            if e.power == 0.0 {
                continue;
            }
            let amp = e.mode.field.sample_bicubic(x, y)?;
            acc += e.amplitude() * Complex64::from_polar(amp, e.mode.beta * z);
        }
        Ok(acc)
    }

    /// `I = ½ε₀c|φ|²` at `(x, y, z)`, W/m².
    pub fn intensity_at(&self, x: f64, y: f64, z: f64) -> Result<f64> {
        Ok(INTENSITY_FACTOR * self.field_at(x, y, z)?.norm_sqr())
    }

    /// Pointwise sum on the shared grid at propagation distance `z`.
    pub fn superpose(&self, z: f64) -> Result<FieldMap<Complex64>> {
        superpose(&self.excitations, z)
    }
}

/// `Σ C_n E_n e^{iβ_n z}` cell by cell.
pub fn superpose(excitations: &[ModeExcitation], z: f64) -> Result<FieldMap<Complex64>> {
    let field = ModalField::new(excitations.to_vec())?;
    let first = excitations.first().ok_or_else(|| Error::Composition("empty superposition".into()))?;
    let grid = first.mode.field.grid;
    let mut out = FieldMap::<Complex64>::zeros(grid);
    for e in field.excitations() {
        let c = e.amplitude() * Complex64::from_polar(1.0, e.mode.beta * z);
        for (o, &v) in out.values.iter_mut().zip(&e.mode.field.values) {
            *o += c * v;
        }
    }
    Ok(out)
}

/// `½ε₀c|φ|²` on every cell.
pub fn intensity_map(field: &FieldMap<Complex64>) -> FieldMap<f64> {
    field.map(|v| INTENSITY_FACTOR * v.norm_sqr())
}

/// Bilinear intensity lookup.
pub fn intensity(field: &FieldMap<Complex64>, x: f64, y: f64) -> Result<f64> {
    Ok(INTENSITY_FACTOR * field.sample_bilinear(x, y)?.norm_sqr())
}

/// Transverse power `∫I dx dy`, W.
pub fn integrated_power(field: &FieldMap<Complex64>) -> f64 {
    INTENSITY_FACTOR * field.integrate(|v| v.norm_sqr())
}

/// `Λ = 2π/|β₀ − β₁|`.
pub fn beat_period(beta0: f64, beta1: f64) -> Result<f64> {
    let d = (beta0 - beta1).abs();
    if !(d > 0.0) {
        return Err(Error::Domain("beat period needs distinct propagation constants".into()));
    }
    Ok(2.0 * std::f64::consts::PI / d)
}

/// Period of an oscillating trace from the mean spacing of its upward
/// crossings through the trace mean (linear interpolation between samples).
pub fn oscillation_period(z: &[f64], values: &[f64]) -> Result<f64> {
    if z.len() != values.len() || z.len() < 4 {
        return Err(Error::Fit("need at least four samples".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let crossings: Vec<f64> = z
        .windows(2)
        .zip(values.windows(2))
        .filter(|(_, v)| v[0] < mean && v[1] >= mean)
        .map(|(z, v)| z[0] + (mean - v[0]) / (v[1] - v[0]) * (z[1] - z[0]))
        .collect();
    if crossings.len() < 2 {
        return Err(Error::Fit("trace completes less than one oscillation".into()));
    }
    Ok((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rect, Structure};
    use crate::grid::SimulationGrid;
    use crate::modes::{ModeLabel, Polarization};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn fake_mode(beta: f64, wavelength: f64, f: impl Fn(f64, f64) -> f64) -> Arc<GuidedMode> {
        let grid = SimulationGrid::new(40, 40, 0.05, 0.05, -1.0, -1.0).unwrap();
        let mut field = FieldMap::from_fn(grid, f);
        let p = INTENSITY_FACTOR * field.integrate(|v| v * v);
        field.values.iter_mut().for_each(|v| *v /= p.sqrt());
        Arc::new(GuidedMode {
            label: ModeLabel::new(Polarization::TE, 0, 0),
            beta,
            wavelength,
            field,
            power: 1.0,
            residual: 0.0,
            structure: Structure { background: 1.0, regions: vec![] },
            core: Rect::new(-0.1, 0.1, -0.1, 0.1),
            clad_index: 1.0,
        })
    }

    fn pair() -> (Arc<GuidedMode>, Arc<GuidedMode>) {
        let a = fake_mode(10.0, 1.0, |x, y| (-(x * x + y * y) * 4.0).exp());
        let b = fake_mode(7.0, 1.0, |x, y| y * (-(x * x + y * y) * 4.0).exp());
        (a, b)
    }

    #[test]
    fn single_mode_intensity_is_z_independent() {
        let (a, _) = pair();
        let f = ModalField::new(vec![ModeExcitation::new(a, 2e-3, 0.3).unwrap()]).unwrap();
        let i0 = f.intensity_at(0.1, 0.2, 0.0).unwrap();
        for z in [0.37, 1.9, 12.0] {
            assert_relative_eq!(f.intensity_at(0.1, 0.2, z).unwrap(), i0, max_relative = 1e-12);
        }
        assert!(!f.is_z_modulated());
    }

    #[test]
    fn integrated_power_matches_launch() {
        let (a, b) = pair();
        let f = superpose(
            &[ModeExcitation::new(a, 1.5e-3, 0.0).unwrap(), ModeExcitation::new(b, 0.5e-3, 1.0).unwrap()],
            0.4,
        )
        .unwrap();
        // The two fake modes are orthogonal by parity in y.
        assert_relative_eq!(integrated_power(&f), 2.0e-3, max_relative = 1e-10);
    }

    #[test]
    fn zero_and_doubling() {
        let (a, _) = pair();
        let zero = superpose(&[ModeExcitation::new(a.clone(), 0.0, 0.0).unwrap()], 0.0).unwrap();
        assert_eq!(intensity(&zero, 0.0, 0.0).unwrap(), 0.0);
        let one = superpose(&[ModeExcitation::new(a.clone(), 1.0, 0.0).unwrap()], 0.0).unwrap();
        let four = superpose(&[ModeExcitation::new(a, 4.0, 0.0).unwrap()], 0.0).unwrap();
        assert_relative_eq!(intensity(&four, 0.1, 0.1).unwrap(), 4.0 * intensity(&one, 0.1, 0.1).unwrap());
    }

    #[test]
    fn mixed_wavelengths_are_rejected() {
        let a = fake_mode(10.0, 1.0, |x, _| x);
        let b = fake_mode(10.0, 0.8, |x, _| x);
        let r = superpose(&[ModeExcitation::new(a, 1.0, 0.0).unwrap(), ModeExcitation::new(b, 1.0, 0.0).unwrap()], 0.0);
        assert!(matches!(r, Err(Error::Composition(_))));
    }

    #[test]
    fn outside_query_is_domain_error() {
        let (a, _) = pair();
        let f = superpose(&[ModeExcitation::new(a, 1.0, 0.0).unwrap()], 0.0).unwrap();
        assert!(matches!(intensity(&f, 5.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn beat_period_values() {
        assert_relative_eq!(beat_period(22.04e6, 17.23e6).unwrap(), 1.3063e-6, max_relative = 1e-4);
        assert_relative_eq!(beat_period(3.0, 6.0).unwrap(), 2.0 * PI / 3.0);
        assert!(beat_period(1.0, 1.0).is_err());
    }

    #[test]
    fn crossing_period_of_a_cosine() {
        let z: Vec<f64> = (0..2000).map(|k| k as f64 * 0.01).collect();
        let v: Vec<f64> = z.iter().map(|z| 2.0 + (2.0 * PI * z / 1.31 + 0.4).cos()).collect();
        assert_relative_eq!(oscillation_period(&z, &v).unwrap(), 1.31, max_relative = 1e-4);
    }
}
