//! Finite-difference transverse eigenmodes of a channel waveguide and the
//! evanescent decay of their fields into the cladding.
//!
//! TE modes solve the scalar reduced wave equation
//! `∇⊥²E + n²k₀²E = β²E` on a five-point stencil with homogeneous Dirichlet
//! walls. TM modes use the semivectorial `E_y` operator, whose vertical part
//! `∂_y[n⁻²∂_y(n²E)]` carries the interface correction; that operator is not
//! symmetric and is solved by subspace iteration seeded with scalar modes.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::eigen::{eigs_below_shift, eigs_nonsymmetric_near, EigenOptions, EigenPair};
use crate::geometry::{build_index_profile, Rect, Structure, WaveguideGeometry};
use crate::grid::{FieldMap, SimulationGrid};
use crate::physics::constants::{SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};
use crate::physics::wavenumber;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    TE,
    TM,
}

/// `TEmn`/`TMmn` with `m` nodes across `x` and `n` nodes across `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeLabel {
    pub polarization: Polarization,
    pub x_order: u8,
    pub y_order: u8,
}

impl ModeLabel {
    pub const TE00: Self = Self::new(Polarization::TE, 0, 0);
    pub const TE01: Self = Self::new(Polarization::TE, 0, 1);
    pub const TE10: Self = Self::new(Polarization::TE, 1, 0);
    pub const TE11: Self = Self::new(Polarization::TE, 1, 1);
    pub const TM00: Self = Self::new(Polarization::TM, 0, 0);

    pub const fn new(polarization: Polarization, x_order: u8, y_order: u8) -> Self {
        Self { polarization, x_order, y_order }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.polarization {
            Polarization::TE => "TE",
            Polarization::TM => "TM",
        };
        write!(f, "{p}{}{}", self.x_order, self.y_order)
    }
}

impl FromStr for ModeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("invalid mode label {s:?} (expected e.g. TE01)"));
        if s.len() != 4 || !s.is_ascii() {
            return Err(bad());
        }
        let polarization = match &s[..2].to_ascii_uppercase()[..] {
            "TE" => Polarization::TE,
            "TM" => Polarization::TM,
            _ => return Err(bad()),
        };
        let digit = |c: u8| if c.is_ascii_digit() { Ok(c - b'0') } else { Err(bad()) };
        Ok(Self::new(polarization, digit(s.as_bytes()[2])?, digit(s.as_bytes()[3])?))
    }
}

impl Serialize for ModeLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModeLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A guided eigenmode with its field normalized to carry 1 W:
/// `½ε₀c·∫E² dx dy = 1 W`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuidedMode {
    pub label: ModeLabel,
    /// Propagation constant, rad/m.
    pub beta: f64,
    pub wavelength: f64,
    /// Real transverse field, V/m per √W.
    pub field: FieldMap<f64>,
    /// Power carried at unit amplitude, W.
    pub power: f64,
    /// Relative residual of the discrete eigenproblem.
    pub residual: f64,
    pub structure: Structure,
    /// Rectangle used for labelling and as the default surface reference.
    pub core: Rect,
    pub clad_index: f64,
}

impl GuidedMode {
    pub fn k0(&self) -> f64 {
        wavenumber(self.wavelength)
    }

    pub fn effective_index(&self) -> f64 {
        self.beta / self.k0()
    }

    /// `½ε₀c·Σ E²·dx·dy` in W.
    pub fn carried_power(&self) -> f64 {
        0.5 * VACUUM_PERMITTIVITY * SPEED_OF_LIGHT * self.field.integrate(|e| e * e)
    }

    /// Surface of the core's top face.
    pub fn surface_height(&self) -> f64 {
        self.core.y1
    }
}

#[derive(Debug, Clone)]
pub struct ModeSolverOptions {
    pub max_modes: usize,
    /// Ritz tolerance passed to the eigen-solver.
    pub tolerance: f64,
    /// Optional warm start, e.g. the fundamental mode of a nearby geometry.
    pub initial_guess: Option<Vec<f64>>,
}

impl Default for ModeSolverOptions {
    fn default() -> Self {
        Self { max_modes: 4, tolerance: 1e-12, initial_guess: None }
    }
}

#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub modes: Vec<GuidedMode>,
    pub restarts: usize,
    pub operator_applications: usize,
    /// Largest relative eigen-residual among the returned modes.
    pub max_residual: f64,
}

/// Guided modes of `geometry` at `wavelength`, sorted by descending `β`.
/// An index profile without a guiding window yields an empty list.
pub fn solve_modes(
    geometry: &WaveguideGeometry,
    grid: &SimulationGrid,
    wavelength: f64,
    polarization: Polarization,
    max_modes: usize,
) -> Result<Vec<GuidedMode>> {
    let opts = ModeSolverOptions { max_modes, ..Default::default() };
    Ok(solve_modes_with(geometry, grid, wavelength, polarization, &opts)?.modes)
}

pub fn solve_modes_with(
    geometry: &WaveguideGeometry,
    grid: &SimulationGrid,
    wavelength: f64,
    polarization: Polarization,
    opts: &ModeSolverOptions,
) -> Result<ModeSolution> {
    build_index_profile(geometry, grid)?;
    let lower = geometry.substrate_index.max(geometry.clad_index);
    solve_structure_modes(
        &geometry.structure(),
        geometry.core_rect(),
        lower,
        grid,
        wavelength,
        polarization,
        opts,
    )
}

/// Modes of an arbitrary rectangle-built cross-section. Eigenvalues are kept
/// when `lower_index·k₀ < β < n_max·k₀`.
pub fn solve_structure_modes(
    structure: &Structure,
    core: Rect,
    lower_index: f64,
    grid: &SimulationGrid,
    wavelength: f64,
    polarization: Polarization,
    opts: &ModeSolverOptions,
) -> Result<ModeSolution> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::Domain(format!("wavelength must be positive, got {wavelength}")));
    }
    let empty = ModeSolution { modes: Vec::new(), restarts: 0, operator_applications: 0, max_residual: 0.0 };
    let n_max = structure.max_index();
    if n_max <= lower_index || opts.max_modes == 0 {
        return Ok(empty);
    }
    let k0 = wavenumber(wavelength);
    let index = structure.rasterize(grid);
    let scalar = helmholtz_operator(&index, k0, Polarization::TE);
    let shift = (n_max * k0).powi(2) * (1.0 + 1e-12);
    let extra = if polarization == Polarization::TM { 4 } else { 0 };
    let eig_opts = EigenOptions {
        nev: opts.max_modes + extra,
        tolerance: opts.tolerance,
        initial_guess: opts.initial_guess.clone(),
        floor: Some((lower_index * k0).powi(2)),
        ..Default::default()
    };
    let mut sol = eigs_below_shift(&scalar, shift, &eig_opts)?;
    if polarization == Polarization::TM {
        let mut start: Vec<Vec<f64>> = sol.pairs.iter().map(|p| p.vector.clone()).collect();
        // Pad with pseudo-random filler up to `max_modes + 4` columns.
        let mut k = 0usize;
        while start.len() < opts.max_modes + extra {
            start.push((0..grid.len()).map(|i| ((i * 7919 + k * 104_729) % 1009) as f64 / 1009.0 - 0.5).collect());
            k += 1;
        }
        let top = sol.pairs.first().map_or(shift, |p| p.value);
        let op = helmholtz_operator(&index, k0, Polarization::TM);
        let tm = eigs_nonsymmetric_near(&op, top, start, opts.max_modes, 1e-9, 400)?;
        sol.restarts += tm.restarts;
        sol.operator_applications += tm.operator_applications;
        sol.pairs = tm.pairs;
    }

    let lo = (lower_index * k0).powi(2);
    let hi = (n_max * k0).powi(2);
    let mut modes: Vec<GuidedMode> = sol
        .pairs
        .into_iter()
        .filter(|p| p.value > lo && p.value < hi)
        .take(opts.max_modes)
        .map(|p| build_mode(p, grid, wavelength, polarization, structure, core))
        .collect();
    modes.sort_by(|a, b| b.beta.total_cmp(&a.beta));
    let max_residual = modes.iter().map(|m| m.residual).fold(0.0, f64::max);
    Ok(ModeSolution { modes, restarts: sol.restarts, operator_applications: sol.operator_applications, max_residual })
}

/// Discrete `∇⊥² + n²k₀²` (TE) or its semivectorial `E_y` variant (TM).
pub fn helmholtz_operator(index: &FieldMap<f64>, k0: f64, polarization: Polarization) -> CsrMatrix<f64> {
    let g = index.grid;
    let (cx, cy) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let eps = |i: usize, j: usize| index.get(i, j).powi(2);
    let mut t = Vec::with_capacity(5 * g.len());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let p = g.index(i, j);
            let e = eps(i, j);
            let mut diag = e * k0 * k0 - 2.0 * cx;
            if i > 0 {
                t.push((p, g.index(i - 1, j), cx));
            }
            if i + 1 < g.nx {
                t.push((p, g.index(i + 1, j), cx));
            }
            match polarization {
                Polarization::TE => {
                    diag -= 2.0 * cy;
                    if j > 0 {
                        t.push((p, g.index(i, j - 1), cy));
                    }
                    if j + 1 < g.ny {
                        t.push((p, g.index(i, j + 1), cy));
                    }
                }
                Polarization::TM => {
                    // Dirichlet ghost cells take the neighbouring permittivity.
                    let below = if j > 0 { eps(i, j - 1) } else { e };
                    let above = if j + 1 < g.ny { eps(i, j + 1) } else { e };
                    diag -= 2.0 * cy * (e / (e + below) + e / (e + above));
                    if j > 0 {
                        t.push((p, g.index(i, j - 1), 2.0 * cy * below / (e + below)));
                    }
                    if j + 1 < g.ny {
                        t.push((p, g.index(i, j + 1), 2.0 * cy * above / (e + above)));
                    }
                }
            }
            t.push((p, p, diag));
        }
    }
    CsrMatrix::from_triplets(g.len(), t)
}

fn build_mode(
    pair: EigenPair,
    grid: &SimulationGrid,
    wavelength: f64,
    polarization: Polarization,
    structure: &Structure,
    core: Rect,
) -> GuidedMode {
    let norm2: f64 = pair.vector.iter().map(|v| v * v).sum();
    let scale = (2.0 / (VACUUM_PERMITTIVITY * SPEED_OF_LIGHT * grid.cell_area() * norm2)).sqrt();
    let mut field = FieldMap { grid: *grid, values: pair.vector.iter().map(|v| v * scale).collect() };
    orient(&mut field, &core);
    let (nx, ny) = count_nodes(&field, &core);
    GuidedMode {
        label: ModeLabel::new(polarization, nx, ny),
        beta: pair.value.sqrt(),
        wavelength,
        field,
        power: 1.0,
        residual: pair.residual,
        structure: structure.clone(),
        core,
        clad_index: structure.background,
    }
}

/// Fixes the overall sign so the quadrant up and right of the core centre
/// integrates positive (upper lobe of TE01, right lobe of TE10).
fn orient(field: &mut FieldMap<f64>, core: &Rect) {
    let g = field.grid;
    let (xc, yc) = core.center();
    let mut quad = 0.0;
    let mut total = 0.0;
    let mut peak = (0.0f64, 0.0f64);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let v = field.get(i, j);
            total += v.abs();
            if g.x(i) > xc && g.y(j) > yc {
                quad += v;
            }
            if v.abs() > peak.0 {
                peak = (v.abs(), v);
            }
        }
    }
    let sign = if quad.abs() > 1e-6 * total { quad.signum() } else { peak.1.signum() };
    if sign < 0.0 {
        field.values.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Sign changes along a horizontal and a vertical line through the core,
/// each offset by a quarter of the core size so it misses the other
/// family's nodal lines. Samples below 10⁻³ of the line maximum are skipped.
pub fn count_nodes(field: &FieldMap<f64>, core: &Rect) -> (u8, u8) {
    let g = field.grid;
    let (xc, yc) = core.center();
    let row = g.nearest_row(yc + 0.25 * (core.y1 - core.y0));
    let col = g.nearest_column(xc + 0.25 * (core.x1 - core.x0));
    let horizontal: Vec<f64> =
        (0..g.nx).filter(|&i| g.x(i) >= core.x0 && g.x(i) <= core.x1).map(|i| field.get(i, row)).collect();
    let vertical: Vec<f64> =
        (0..g.ny).filter(|&j| g.y(j) >= core.y0 && g.y(j) <= core.y1).map(|j| field.get(col, j)).collect();
    (sign_changes(&horizontal), sign_changes(&vertical))
}

fn sign_changes(line: &[f64]) -> u8 {
    let peak = line.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut last = 0.0f64;
    let mut count = 0u8;
    for &v in line.iter().filter(|v| v.abs() >= 1e-3 * peak) {
        if last != 0.0 && v.signum() != last.signum() {
            count = count.saturating_add(1);
        }
        last = v;
    }
    count
}

/// Normalized overlap `∫E_a E_b / √(∫E_a² ∫E_b²)` of two modes on one grid.
pub fn mode_overlap(a: &GuidedMode, b: &GuidedMode) -> Result<f64> {
    if a.field.grid != b.field.grid {
        return Err(Error::Composition("modes live on different grids".into()));
    }
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
    let (fa, fb) = (&a.field.values, &b.field.values);
    Ok(dot(fa, fb) / (dot(fa, fa) * dot(fb, fb)).sqrt())
}

/// Height window above the surface used for decay fits, m.
pub const DECAY_WINDOW_TOP: f64 = 0.5e-6;

/// Evanescent decay length from a least-squares fit of `ln|E|` against
/// height along a vertical probe through `probe_x`, over
/// `[surface + 2 cells, surface + 0.5 μm]`. Without a probe the column of
/// largest field at the bottom of the window is used.
pub fn decay_length(mode: &GuidedMode, probe_x: Option<f64>) -> Result<f64> {
    let g = mode.field.grid;
    let top = mode.surface_height();
    let y0 = top + 2.0 * g.dy;
    let y1 = top + DECAY_WINDOW_TOP;
    if y1 > g.y_max() {
        return Err(Error::Fit("decay window extends beyond the grid".into()));
    }
    let rows: Vec<usize> = (0..g.ny).filter(|&j| g.y(j) >= y0 - 1e-6 * g.dy && g.y(j) <= y1).collect();
    let col = match probe_x {
        Some(x) => g.nearest_column(x),
        None => {
            let j0 = *rows.first().ok_or_else(|| Error::Fit("empty decay window".into()))?;
            (0..g.nx)
                .filter(|&i| g.x(i) >= mode.core.x0 && g.x(i) <= mode.core.x1)
                .max_by(|&a, &b| mode.field.get(a, j0).abs().total_cmp(&mode.field.get(b, j0).abs()))
                .ok_or_else(|| Error::Fit("no grid column above the core".into()))?
        }
    };
    let ys: Vec<f64> = rows.iter().map(|&j| g.y(j)).collect();
    let vals: Vec<f64> = rows.iter().map(|&j| mode.field.get(col, j)).collect();
    fit_exponential_decay(&ys, &vals)
}

/// Least-squares `L` for `|v| ∝ e^(−y/L)`. The samples must share a sign and
/// decrease strictly in magnitude.
pub fn fit_exponential_decay(y: &[f64], values: &[f64]) -> Result<f64> {
    if y.len() != values.len() || y.len() < 3 {
        return Err(Error::Fit("need at least three samples".into()));
    }
    let s0 = values[0].signum();
    if values.iter().any(|v| *v == 0.0 || v.signum() != s0) {
        return Err(Error::Fit("field changes sign inside the fit window".into()));
    }
    if values.windows(2).any(|w| w[1].abs() >= w[0].abs()) {
        return Err(Error::Fit("field is not monotonically decaying in the fit window".into()));
    }
    let n = y.len() as f64;
    let ly: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    let my = y.iter().sum::<f64>() / n;
    let ml = ly.iter().sum::<f64>() / n;
    let sxy: f64 = y.iter().zip(&ly).map(|(a, b)| (a - my) * (b - ml)).sum();
    let sxx: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::Fit(format!("non-decaying slope {slope}")));
    }
    Ok(-1.0 / slope)
}

/// `1/√(β² − n_c²k₀²)`, the decay length of a plane evanescent wave with the
/// mode's propagation constant.
pub fn scalar_decay_length(beta: f64, wavelength: f64, clad_index: f64) -> Result<f64> {
    let kc = clad_index * wavenumber(wavelength);
    if !(beta > kc) {
        return Err(Error::Domain(format!("β = {beta:.6e} does not exceed the cladding wavenumber {kc:.6e}")));
    }
    Ok(1.0 / (beta * beta - kc * kc).sqrt())
}

pub fn decay_length_scalar_estimate(mode: &GuidedMode) -> Result<f64> {
    scalar_decay_length(mode.beta, mode.wavelength, mode.clad_index)
}

/// `α_L = (L_R − L_B)/L_B`.
pub fn relative_decay_difference(l_red: f64, l_blue: f64) -> Result<f64> {
    if !(l_blue > 0.0) {
        return Err(Error::Domain(format!("blue decay length must be positive, got {l_blue}")));
    }
    Ok((l_red - l_blue) / l_blue)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub wavelength: f64,
    pub label: ModeLabel,
    /// `None` when the mode is cut off at this wavelength.
    pub beta: Option<f64>,
    pub decay_length: Option<f64>,
    pub scalar_decay_length: Option<f64>,
}

/// Solves every requested mode at each wavelength and fits its decay length.
/// Rows are ordered by wavelength, then by the order of `labels`.
pub fn dispersion_scan(
    geometry: &WaveguideGeometry,
    grid: &SimulationGrid,
    wavelengths: &[f64],
    labels: &[ModeLabel],
) -> Result<Vec<DispersionRow>> {
    let mut sorted = wavelengths.to_vec();
    sorted.sort_by(f64::total_cmp);
    let per_lambda: Vec<Result<Vec<DispersionRow>>> =
        sorted.par_iter().map(|&lambda| scan_one(geometry, grid, lambda, labels)).collect();
    let mut rows = Vec::new();
    for r in per_lambda {
        rows.extend(r?);
    }
    Ok(rows)
}

fn scan_one(
    geometry: &WaveguideGeometry,
    grid: &SimulationGrid,
    wavelength: f64,
    labels: &[ModeLabel],
) -> Result<Vec<DispersionRow>> {
    let mut solved: Vec<(Polarization, Vec<GuidedMode>)> = Vec::new();
    for pol in [Polarization::TE, Polarization::TM] {
        if labels.iter().any(|l| l.polarization == pol) {
            let wanted = labels
                .iter()
                .filter(|l| l.polarization == pol)
                .map(|l| (l.x_order + 1) as usize * (l.y_order + 1) as usize + 2)
                .max()
                .unwrap_or(1);
            solved.push((pol, solve_modes(geometry, grid, wavelength, pol, wanted)?));
        }
    }
    Ok(labels
        .iter()
        .map(|label| {
            let mode = solved
                .iter()
                .find(|(p, _)| *p == label.polarization)
                .and_then(|(_, ms)| ms.iter().find(|m| m.label == *label));
            DispersionRow {
                wavelength,
                label: *label,
                beta: mode.map(|m| m.beta),
                decay_length: mode.and_then(|m| decay_length(m, None).ok()),
                scalar_decay_length: mode.and_then(|m| decay_length_scalar_estimate(m).ok()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn labels_round_trip_through_text() {
        for l in [ModeLabel::TE00, ModeLabel::TE01, ModeLabel::TE10, ModeLabel::TM00] {
            assert_eq!(l.to_string().parse::<ModeLabel>().unwrap(), l);
        }
        assert!("XE01".parse::<ModeLabel>().is_err());
        assert!("TE0".parse::<ModeLabel>().is_err());
        assert_eq!(serde_json::to_string(&ModeLabel::TE01).unwrap(), "\"TE01\"");
    }

    #[test]
    fn synthetic_exponential_fit_recovers_length() {
        let y: Vec<f64> = (0..60).map(|k| 10e-9 + k as f64 * 5e-9).collect();
        let v: Vec<f64> = y.iter().map(|y| 3.0 * (-y / 0.05e-6).exp()).collect();
        assert_relative_eq!(fit_exponential_decay(&y, &v).unwrap(), 0.05e-6, max_relative = 1e-10);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_relative_eq!(fit_exponential_decay(&y, &neg).unwrap(), 0.05e-6, max_relative = 1e-10);
    }

    #[test]
    fn fit_rejects_sign_change_and_growth() {
        let y = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(fit_exponential_decay(&y, &[1.0, 0.5, -0.2, 0.1]), Err(Error::Fit(_))));
        assert!(matches!(fit_exponential_decay(&y, &[1.0, 2.0, 3.0, 4.0]), Err(Error::Fit(_))));
    }

    #[test]
    fn scalar_estimate_closed_forms() {
        let lambda = 865e-9;
        let k0 = wavenumber(lambda);
        assert_relative_eq!(scalar_decay_length(k0 * 2f64.sqrt(), lambda, 1.0).unwrap(), 1.0 / k0, max_relative = 1e-14);
        // Hand value for β = 22.04e6 m⁻¹ at 865 nm: k₀ = 7.2638e6 m⁻¹.
        let l = scalar_decay_length(22.04e6, lambda, 1.0).unwrap();
        assert!((l - 48.06e-9).abs() < 0.05e-9, "{l}");
        assert!(matches!(scalar_decay_length(0.9 * k0, lambda, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn relative_difference_identities() {
        assert_eq!(relative_decay_difference(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(relative_decay_difference(2.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(relative_decay_difference(0.0617, 0.0375).unwrap(), 0.6453, epsilon = 1e-4);
        assert!(relative_decay_difference(1.0, 0.0).is_err());
    }

    #[test]
    fn uniform_index_has_no_modes() {
        let geo = WaveguideGeometry {
            core_index: 1.0,
            substrate_index: 1.0,
            clad_index: 1.0,
            ..WaveguideGeometry::soi_default()
        };
        let grid = SimulationGrid::centered(20e-9, 2e-6, 2e-6, 1.0e-6).unwrap();
        assert!(solve_modes(&geo, &grid, 865e-9, Polarization::TE, 4).unwrap().is_empty());
    }

    #[test]
    fn coarse_soi_modes_are_labelled_and_normalized() {
        let grid = SimulationGrid::centered(20e-9, 3e-6, 3e-6, 1.4e-6).unwrap();
        let modes = solve_modes(&WaveguideGeometry::soi_default(), &grid, 865e-9, Polarization::TE, 3).unwrap();
        assert!(modes.len() >= 3);
        assert_eq!(modes[0].label, ModeLabel::TE00);
        let second: Vec<ModeLabel> = modes[1..3].iter().map(|m| m.label).collect();
        assert!(second.contains(&ModeLabel::TE01) && second.contains(&ModeLabel::TE10), "{second:?}");
        for m in &modes {
            assert_relative_eq!(m.carried_power(), 1.0, max_relative = 1e-10);
            assert!(m.residual < 1e-6, "{}: residual {}", m.label, m.residual);
        }
        assert!(mode_overlap(&modes[0], &modes[1]).unwrap().abs() < 1e-6);
        // The TE01 upper lobe is positive after orientation.
        let te01 = modes.iter().find(|m| m.label == ModeLabel::TE01).unwrap();
        let g = te01.field.grid;
        assert!(te01.field.get(g.nearest_column(0.0), g.nearest_row(-0.05e-6)) > 0.0);
    }

    #[test]
    fn coarse_tm_fundamental_sits_below_te() {
        let grid = SimulationGrid::centered(20e-9, 3e-6, 3e-6, 1.4e-6).unwrap();
        let geo = WaveguideGeometry::soi_default();
        let te = solve_modes(&geo, &grid, 865e-9, Polarization::TE, 1).unwrap();
        let tm = solve_modes(&geo, &grid, 865e-9, Polarization::TM, 1).unwrap();
        assert_eq!(tm[0].label, ModeLabel::TM00);
        assert!(tm[0].beta < te[0].beta);
        assert!(tm[0].residual < 1e-6);
    }
}
