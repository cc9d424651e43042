//! Optical dipole and atom-surface potentials above the waveguide, trap
//! minima, depths and the figures of merit derived from them.
//!
//! Energies are in joules unless a field name ends in `_uk`. Heights are
//! measured along `y`; the standoff of a minimum is its height above the
//! core's top face.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{ModalField, INTENSITY_FACTOR};
use crate::geometry::{Rect, Structure};
use crate::grid::SimulationGrid;
use crate::physics::constants::{HBAR, SPEED_OF_LIGHT};
use crate::physics::{
    fine_structure_detuning_factor, fine_structure_scattering_factor, joules_to_microkelvin, recoil_energy,
    AtomSpecies,
};
use crate::{Error, Result};

/// Minimum `|Δ|/Γ` on both lines for the far-detuned formulas.
pub const FAR_DETUNING_RATIO: f64 = 1e3;

/// Rescaled distance beyond which the surface interpolation is continued by
/// its `l⁻⁴` asymptote. The printed bracket has a pole near 15.8.
pub const SURFACE_BRACKET_LIMIT: f64 = 10.0;

/// `3πc²/(2ω₀³)` with `ω₀` the D2 angular frequency, m³·s⁻¹.
pub fn dipole_prefactor(atom: &AtomSpecies) -> f64 {
    3.0 * PI * SPEED_OF_LIGHT.powi(2) / (2.0 * atom.reference_angular_frequency().powi(3))
}

fn check_far_detuned(atom: &AtomSpecies, wavelength: f64) -> Result<()> {
    let (d1, d2) = atom.detunings(wavelength)?;
    if d1.abs() < FAR_DETUNING_RATIO * atom.gamma_d1 || d2.abs() < FAR_DETUNING_RATIO * atom.gamma_d2 {
        return Err(Error::Domain(format!(
            "wavelength {wavelength:.6e} m is too close to resonance for the far-detuned dipole potential"
        )));
    }
    Ok(())
}

/// Dipole potential of a single far-detuned field, J. Negative (attractive)
/// below both line frequencies, positive above.
pub fn dipole_potential(intensity: f64, atom: &AtomSpecies, wavelength: f64) -> Result<f64> {
    check_far_detuned(atom, wavelength)?;
    Ok(dipole_prefactor(atom) * fine_structure_detuning_factor(atom, wavelength)? * intensity)
}

/// Photon scattering rate of a single far-detuned field, s⁻¹.
pub fn scattering_rate(intensity: f64, atom: &AtomSpecies, wavelength: f64) -> Result<f64> {
    check_far_detuned(atom, wavelength)?;
    Ok(dipole_prefactor(atom) / HBAR * fine_structure_scattering_factor(atom, wavelength)? * intensity)
}

/// Parameters of the atom-surface interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceParams {
    /// Relative permittivity of the nearest dielectric.
    pub permittivity: f64,
    /// Transition wavelength used to rescale distances, m.
    pub reference_wavelength: f64,
    pub enabled: bool,
}

impl SurfaceParams {
    /// Silicon surface (`ε = 3.42²`) with distances rescaled by the D2 line.
    pub fn silicon(atom: &AtomSpecies) -> Self {
        Self { permittivity: 3.42f64.powi(2), reference_wavelength: atom.d2_wavelength, enabled: true }
    }

    pub fn disabled() -> Self {
        Self { permittivity: 1.0, reference_wavelength: 780e-9, enabled: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.permittivity >= 1.0 && self.reference_wavelength > 0.0) {
            return Err(Error::Config(format!(
                "surface permittivity must be ≥ 1 and reference wavelength positive, got {} and {}",
                self.permittivity, self.reference_wavelength
            )));
        }
        Ok(())
    }
}

/// `(1 + 1.098z)⁻¹ − 0.00493z/(1 + 0.00987z³ − 0.00064z⁴)`.
pub fn surface_bracket(z: f64) -> f64 {
    1.0 / (1.0 + 1.098 * z) - 0.00493 * z / (1.0 + 0.00987 * z.powi(3) - 0.00064 * z.powi(4))
}

/// Atom-surface potential at distance `l` from a flat dielectric, J.
///
/// With `z = 2πl/λ_ref`, `U = −bracket(z)·(ε−1)/(ε+1)·C₃/z³` where
/// `C₃ = c3_factor·ħΓ_D2`. Beyond `z = 10` the value is continued as `z⁻⁴`.
pub fn surface_potential(l: f64, atom: &AtomSpecies, surface: &SurfaceParams) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("surface distance must be positive, got {l}")));
    }
    if !surface.enabled {
        return Ok(0.0);
    }
    let eps = surface.permittivity;
    let strength = (eps - 1.0) / (eps + 1.0) * atom.c3_factor * HBAR * atom.gamma_d2;
    let z = 2.0 * PI * l / surface.reference_wavelength;
    let v = if z <= SURFACE_BRACKET_LIMIT {
        surface_bracket(z) / z.powi(3)
    } else {
        let z0 = SURFACE_BRACKET_LIMIT;
        surface_bracket(z0) / z0.powi(3) * (z0 / z).powi(4)
    };
    Ok(-strength * v)
}

/// Red and blue fields plus everything else the potential depends on.
#[derive(Debug, Clone)]
pub struct TwoColorConfig {
    pub red: ModalField,
    pub blue: ModalField,
    pub atom: AtomSpecies,
    pub surface: SurfaceParams,
    pub include_gravity: bool,
}

/// Potential split into its physical parts, J.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PotentialComponents {
    pub red: f64,
    pub blue: f64,
    pub surface: f64,
    pub gravity: f64,
}

impl PotentialComponents {
    pub fn total(&self) -> f64 {
        self.red + self.blue + self.surface + self.gravity
    }
}

/// A validated [`TwoColorConfig`] with cached per-color prefactors, able to
/// evaluate the potential anywhere in the exterior.
#[derive(Debug, Clone)]
pub struct Landscape {
    config: TwoColorConfig,
    grid: SimulationGrid,
    structure: Structure,
    core: Rect,
    red_dipole: f64,
    blue_dipole: f64,
    red_scatter: f64,
    blue_scatter: f64,
}

impl Landscape {
    pub fn new(config: TwoColorConfig) -> Result<Self> {
        config.atom.validate()?;
        config.surface.validate()?;
        let red_mode = config.red.excitations().first().map(|e| e.mode.clone());
        let blue_mode = config.blue.excitations().first().map(|e| e.mode.clone());
        let (red_mode, blue_mode) = match (red_mode, blue_mode) {
            (Some(r), Some(b)) => (r, b),
            _ => return Err(Error::Config("both colors need at least one mode (possibly at zero power)".into())),
        };
        if red_mode.field.grid != blue_mode.field.grid {
            return Err(Error::Composition("red and blue modes live on different grids".into()));
        }
        let (lr, lb) = (red_mode.wavelength, blue_mode.wavelength);
        if !(lr > config.atom.d1_wavelength) {
            return Err(Error::Config(format!("red wavelength {lr:.4e} m must lie above both atomic lines")));
        }
        if !(lb < config.atom.d2_wavelength) {
            return Err(Error::Config(format!("blue wavelength {lb:.4e} m must lie below both atomic lines")));
        }
        let atom = &config.atom;
        let pref = dipole_prefactor(atom);
        Ok(Self {
            grid: blue_mode.field.grid,
            structure: blue_mode.structure.clone(),
            core: blue_mode.core,
            red_dipole: dipole_potential(1.0, atom, lr)?,
            blue_dipole: dipole_potential(1.0, atom, lb)?,
            red_scatter: pref / HBAR * fine_structure_scattering_factor(atom, lr)?,
            blue_scatter: pref / HBAR * fine_structure_scattering_factor(atom, lb)?,
            config,
        })
    }

    pub fn config(&self) -> &TwoColorConfig {
        &self.config
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn core(&self) -> Rect {
        self.core
    }

    pub fn surface_height(&self) -> f64 {
        self.core.y1
    }

    pub fn with_red(&self, red: ModalField) -> Result<Self> {
        Self::new(TwoColorConfig { red, ..self.config.clone() })
    }

    pub fn with_surface(&self, surface: SurfaceParams) -> Result<Self> {
        Self::new(TwoColorConfig { surface, ..self.config.clone() })
    }

    /// Beat period of the red field, or `None` when it is not z-modulated.
    pub fn red_period(&self) -> Result<Option<f64>> {
        let mut betas: Vec<f64> =
            self.config.red.excitations().iter().filter(|e| e.power > 0.0).map(|e| e.mode.beta).collect();
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        match betas.len() {
            0 | 1 => Ok(None),
            2 => Ok(Some(2.0 * PI / (betas[1] - betas[0]))),
            n => Err(Error::Composition(format!("{n} distinct red propagation constants; a lattice needs two"))),
        }
    }

    fn gravity(&self, y: f64) -> f64 {
        if self.config.include_gravity {
            self.config.atom.weight() * (y - self.surface_height())
        } else {
            0.0
        }
    }

    /// Red and blue intensities at a point, W/m².
    pub fn intensities_at(&self, x: f64, y: f64, z: f64) -> Result<(f64, f64)> {
        Ok((self.config.red.intensity_at(x, y, z)?, self.config.blue.intensity_at(x, y, z)?))
    }

    /// Potential at an exterior point from bicubic mode samples.
    pub fn components_at(&self, x: f64, y: f64, z: f64) -> Result<PotentialComponents> {
        let l = self.structure.distance_to_dielectric(x, y);
        if !(l > 0.0) {
            return Err(Error::Domain(format!("point ({x:.4e}, {y:.4e}) m is inside the dielectric")));
        }
        let (ir, ib) = self.intensities_at(x, y, z)?;
        Ok(PotentialComponents {
            red: self.red_dipole * ir,
            blue: self.blue_dipole * ib,
            surface: surface_potential(l, &self.config.atom, &self.config.surface)?,
            gravity: self.gravity(y),
        })
    }

    pub fn potential_at(&self, x: f64, y: f64, z: f64) -> Result<f64> {
        Ok(self.components_at(x, y, z)?.total())
    }

    /// Scattering rates `(Γ_red, Γ_blue)` at a point, s⁻¹.
    pub fn scattering_at(&self, x: f64, y: f64, z: f64) -> Result<(f64, f64)> {
        let (ir, ib) = self.intensities_at(x, y, z)?;
        Ok((self.red_scatter * ir, self.blue_scatter * ib))
    }

    /// Potential on a window of the mode grid at each `z`, from the nodal
    /// mode values. Cells closer than one grid step to the dielectric are
    /// masked (`NaN`).
    pub fn potential_map(&self, window: GridWindow, z: &[f64], periodic: bool) -> Result<PotentialMap> {
        let g = self.grid;
        window.check(&g)?;
        let (nx, ny) = (window.nx(), window.ny());
        let margin = g.dx.max(g.dy);
        let atom = &self.config.atom;
        let mut blue = vec![f64::NAN; nx * ny];
        let mut surface = vec![f64::NAN; nx * ny];
        let mut gravity = vec![f64::NAN; nx * ny];
        for jj in 0..ny {
            for ii in 0..nx {
                let (i, j) = (window.i0 + ii, window.j0 + jj);
                let (x, y) = (g.x(i), g.y(j));
                let l = self.structure.distance_to_dielectric(x, y);
                if l < margin {
                    continue;
                }
                let k = jj * nx + ii;
                let p = g.index(i, j);
                let eb: Complex64 = self
                    .config
                    .blue
                    .excitations()
                    .iter()
                    .map(|e| e.amplitude() * e.mode.field.values[p])
                    .sum();
                blue[k] = self.blue_dipole * INTENSITY_FACTOR * eb.norm_sqr();
                surface[k] = surface_potential(l, atom, &self.config.surface)?;
                gravity[k] = self.gravity(y);
            }
        }
        let stations: Vec<Vec<f64>> = z
            .par_iter()
            .map(|&zk| {
                let phasors: Vec<Complex64> = self
                    .config
                    .red
                    .excitations()
                    .iter()
                    .map(|e| e.amplitude() * Complex64::from_polar(1.0, e.mode.beta * zk))
                    .collect();
                let mut red = vec![f64::NAN; nx * ny];
                for jj in 0..ny {
                    for ii in 0..nx {
                        let k = jj * nx + ii;
                        if blue[k].is_nan() {
                            continue;
                        }
                        let p = g.index(window.i0 + ii, window.j0 + jj);
                        let er: Complex64 = self
                            .config
                            .red
                            .excitations()
                            .iter()
                            .zip(&phasors)
                            .map(|(e, c)| c * e.mode.field.values[p])
                            .sum();
                        red[k] = self.red_dipole * INTENSITY_FACTOR * er.norm_sqr();
                    }
                }
                red
            })
            .collect();
        let red: Vec<f64> = stations.into_iter().flatten().collect();
        let total = red
            .iter()
            .enumerate()
            .map(|(n, r)| {
                let k = n % (nx * ny);
                r + blue[k] + surface[k] + gravity[k]
            })
            .collect();
        Ok(PotentialMap {
            grid: window.grid(&g)?,
            z: z.to_vec(),
            periodic,
            total,
            red,
            blue,
            surface,
            gravity,
        })
    }

    /// The whole mode grid as a window.
    pub fn full_window(&self) -> GridWindow {
        GridWindow { i0: 0, i1: self.grid.nx, j0: 0, j1: self.grid.ny }
    }

    /// Columns within `margin` of the core sides and rows from the core's
    /// bottom face to the top of the grid.
    pub fn core_window(&self, margin: f64) -> GridWindow {
        let g = self.grid;
        let cols: Vec<usize> =
            (0..g.nx).filter(|&i| g.x(i) >= self.core.x0 - margin && g.x(i) <= self.core.x1 + margin).collect();
        let j0 = (0..g.ny).find(|&j| g.y(j) >= self.core.y0).unwrap_or(0);
        GridWindow {
            i0: cols.first().copied().unwrap_or(0),
            i1: cols.last().map_or(g.nx, |c| c + 1),
            j0,
            j1: g.ny,
        }
    }
}

/// Half-open column and row ranges of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridWindow {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl GridWindow {
    pub fn nx(&self) -> usize {
        self.i1 - self.i0
    }

    pub fn ny(&self) -> usize {
        self.j1 - self.j0
    }

    fn check(&self, g: &SimulationGrid) -> Result<()> {
        if self.i1 > g.nx || self.j1 > g.ny || self.nx() < 3 || self.ny() < 3 {
            return Err(Error::Config(format!("window {self:?} does not fit a {}×{} grid", g.nx, g.ny)));
        }
        Ok(())
    }

    fn grid(&self, g: &SimulationGrid) -> Result<SimulationGrid> {
        SimulationGrid::new(
            self.nx(),
            self.ny(),
            g.dx,
            g.dy,
            g.x_min + self.i0 as f64 * g.dx,
            g.y_min + self.j0 as f64 * g.dy,
        )
    }
}

/// Potential sampled on a transverse window at one or more `z` stations.
/// 3D arrays are indexed `(k·ny + j)·nx + i`; the `z`-independent parts are
/// stored once per transverse cell. Masked cells hold `NaN`.
#[derive(Debug, Clone)]
pub struct PotentialMap {
    pub grid: SimulationGrid,
    pub z: Vec<f64>,
    /// Whether the last station neighbours the first.
    pub periodic: bool,
    pub total: Vec<f64>,
    pub red: Vec<f64>,
    pub blue: Vec<f64>,
    pub surface: Vec<f64>,
    pub gravity: Vec<f64>,
}

impl PotentialMap {
    pub fn nz(&self) -> usize {
        self.z.len()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.grid.ny + j) * self.grid.nx + i
    }

    pub fn coords(&self, n: usize) -> (usize, usize, usize) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        (n % nx, (n / nx) % ny, n / (nx * ny))
    }

    pub fn is_masked(&self, n: usize) -> bool {
        self.total[n].is_nan()
    }

    /// Neighbours sharing a face, edge or corner (up to 26). `None` marks a
    /// missing neighbour beyond the domain edge.
    fn neighbours(&self, n: usize, out: &mut Vec<Option<usize>>) {
        out.clear();
        let (i, j, k) = self.coords(n);
        let (nx, ny, nz) = (self.grid.nx as isize, self.grid.ny as isize, self.nz() as isize);
        let dks: &[isize] = if nz == 1 { &[0] } else { &[-1, 0, 1] };
        for &dk in dks {
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    if di == 0 && dj == 0 && dk == 0 {
                        continue;
                    }
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    let mut kk = k as isize + dk;
                    if self.periodic {
                        kk = kk.rem_euclid(nz);
                    }
                    if ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz {
                        out.push(None);
                    } else {
                        out.push(Some(self.index(ii as usize, jj as usize, kk as usize)));
                    }
                }
            }
        }
    }

    /// Cells from which an atom is lost: the domain edge (including open
    /// `z` faces) and cells next to the masked dielectric.
    fn is_exit(&self, n: usize, buf: &mut Vec<Option<usize>>) -> bool {
        self.neighbours(n, buf);
        buf.iter().any(|m| m.is_none_or(|m| self.is_masked(m)))
    }

    /// Interior local minima (no lower neighbour, no exit) whose transverse
    /// position satisfies `keep`, lowest first.
    pub fn local_minima(&self, keep: impl Fn(f64, f64) -> bool) -> Vec<usize> {
        let mut buf = Vec::with_capacity(26);
        let mut out: Vec<usize> = (0..self.total.len())
            .filter(|&n| {
                if self.is_masked(n) {
                    return false;
                }
                let (i, j, _) = self.coords(n);
                if !keep(self.grid.x(i), self.grid.y(j)) || self.is_exit(n, &mut buf) {
                    return false;
                }
                let u = self.total[n];
                buf.iter().flatten().all(|&m| self.total[m] >= u)
            })
            .collect();
        out.sort_by(|&a, &b| self.total[a].total_cmp(&self.total[b]).then(a.cmp(&b)));
        out
    }

    /// Lowest potential at which the basin of `start` spills into an exit or
    /// into a deeper basin, found by flooding cells in ascending order.
    pub fn escape_level(&self, start: usize) -> Result<f64> {
        Ok(self.total[self.escape_cell(start)?])
    }

    /// The cell at which the basin of `start` first spills.
    pub fn escape_cell(&self, start: usize) -> Result<usize> {
        if self.is_masked(start) {
            return Err(Error::InvalidTrap("basin seed lies in the masked region".into()));
        }
        let n = self.total.len();
        let mut order: Vec<usize> = (0..n).filter(|&m| !self.is_masked(m)).collect();
        order.par_sort_unstable_by(|&a, &b| self.total[a].total_cmp(&self.total[b]).then(a.cmp(&b)));
        let mut uf = UnionFind::new(n);
        let mut added = vec![false; n];
        let mut buf = Vec::with_capacity(26);
        let mut roots = Vec::with_capacity(26);
        for &c in &order {
            let exit = self.is_exit(c, &mut buf);
            added[c] = true;
            uf.reset(c, self.total[c], exit);
            roots.clear();
            for &m in buf.iter().flatten() {
                if added[m] && m != c {
                    let r = uf.find(m);
                    if !roots.contains(&r) {
                        roots.push(r);
                    }
                }
            }
            if added[start] {
                let rs = uf.find(start);
                let touches = c == start || roots.contains(&rs);
                if touches {
                    let own_min = uf.min[rs];
                    let spill = (c != start && exit)
                        || roots.iter().any(|&r| r != rs && (uf.escaped[r] || uf.min[r] < own_min));
                    if spill || (c == start && exit) {
                        return Ok(c);
                    }
                }
            }
            for &r in &roots {
                uf.union(c, r);
            }
        }
        Err(Error::InvalidTrap("basin never spills; the domain has no exit".into()))
    }
}

struct UnionFind {
    parent: Vec<usize>,
    min: Vec<f64>,
    escaped: Vec<bool>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), min: vec![f64::INFINITY; n], escaped: vec![false; n] }
    }

    fn reset(&mut self, c: usize, value: f64, exit: bool) {
        self.parent[c] = c;
        self.min[c] = value;
        self.escaped[c] = exit;
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        self.parent[rb] = ra;
        self.min[ra] = self.min[ra].min(self.min[rb]);
        self.escaped[ra] |= self.escaped[rb];
    }
}

/// A refined potential minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapMinimum {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Height above the core's top face, m.
    pub standoff: f64,
    /// J.
    pub potential: f64,
    /// Escape level minus the minimum, J.
    pub depth: f64,
    /// Gradient norm at the refined point, J/m.
    pub gradient_norm: f64,
    /// Where the basin spills: a refined saddle point, or the grid cell next
    /// to the dielectric or domain edge.
    pub escape: [f64; 3],
    pub escape_refined: bool,
}

/// Spatial dimensions that confine the atom: `(x, y)` for a guide, `(x, y, z)`
/// for a lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    Guide,
    Lattice,
}

impl TrapKind {
    fn dims(self) -> usize {
        match self {
            TrapKind::Guide => 2,
            TrapKind::Lattice => 3,
        }
    }
}

/// Finite-difference steps used for derivatives of the continuous potential.
#[derive(Debug, Clone, Copy)]
struct Steps([f64; 3]);

impl Landscape {
    fn eval(&self, p: &[f64; 3]) -> Result<f64> {
        self.potential_at(p[0], p[1], p[2])
    }

    fn gradient_hessian(&self, p: &[f64; 3], dims: usize, h: Steps) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let u0 = self.eval(p)?;
        let mut g = vec![0.0; dims];
        let mut hess = DMatrix::zeros(dims, dims);
        let shifted = |a: usize, sa: f64, b: Option<(usize, f64)>| {
            let mut q = *p;
            q[a] += sa;
            if let Some((b, sb)) = b {
                q[b] += sb;
            }
            self.eval(&q)
        };
        for a in 0..dims {
            let ha = h.0[a];
            let (up, dn) = (shifted(a, ha, None)?, shifted(a, -ha, None)?);
            g[a] = (up - dn) / (2.0 * ha);
            hess[(a, a)] = (up - 2.0 * u0 + dn) / (ha * ha);
            for b in 0..a {
                let hb = h.0[b];
                let v = (shifted(a, ha, Some((b, hb)))? - shifted(a, ha, Some((b, -hb)))?
                    - shifted(a, -ha, Some((b, hb)))?
                    + shifted(a, -ha, Some((b, -hb)))?)
                    / (4.0 * ha * hb);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        Ok((g, hess))
    }

    /// Newton iteration from a grid minimum, with steps clamped to one cell.
    fn refine(&self, start: [f64; 3], dims: usize, h: Steps) -> Result<([f64; 3], f64)> {
        let mut p = start;
        for _ in 0..30 {
            let (g, hess) = self.gradient_hessian(&p, dims, h)?;
            let chol = match hess.clone().cholesky() {
                Some(c) => c,
                None => break,
            };
            let step = chol.solve(&nalgebra::DVector::from_vec(g));
            let mut moved = 0.0f64;
            for a in 0..dims {
                let s = (-step[a]).clamp(-2.0 * h.0[a], 2.0 * h.0[a]);
                p[a] += s;
                moved = moved.max(s.abs() / h.0[a]);
            }
            if moved < 1e-4 {
                break;
            }
        }
        let (g, _) = self.gradient_hessian(&p, dims, h)?;
        Ok((p, g.iter().map(|v| v * v).sum::<f64>().sqrt()))
    }

    /// Newton iteration towards a first-order saddle near `start`. Returns
    /// `None` unless it converges within two cells of `start` to a point with
    /// exactly one negative curvature, outside the masked margin.
    fn refine_saddle(&self, start: [f64; 3], dims: usize, h: Steps) -> Option<([f64; 3], f64)> {
        let mut p = start;
        let mut converged = false;
        for _ in 0..40 {
            let (g, hess) = self.gradient_hessian(&p, dims, h).ok()?;
            let eig = hess.symmetric_eigen();
            if eig.eigenvalues.iter().any(|l| *l == 0.0 || !l.is_finite()) {
                return None;
            }
            // Newton step in the eigenbasis: -Σ v (v·g)/λ.
            let g = nalgebra::DVector::from_vec(g);
            let mut step = nalgebra::DVector::zeros(dims);
            for c in 0..dims {
                let v = eig.eigenvectors.column(c);
                step -= v * (v.dot(&g) / eig.eigenvalues[c]);
            }
            let mut moved = 0.0f64;
            for a in 0..dims {
                let s = step[a].clamp(-h.0[a], h.0[a]);
                p[a] += s;
                moved = moved.max(s.abs() / h.0[a]);
                if (p[a] - start[a]).abs() > 4.0 * h.0[a] {
                    return None;
                }
            }
            if moved < 1e-4 {
                converged = true;
                break;
            }
        }
        let (_, hess) = self.gradient_hessian(&p, dims, h).ok()?;
        let negative = hess.symmetric_eigen().eigenvalues.iter().filter(|l| **l < 0.0).count();
        let clear = self.structure.distance_to_dielectric(p[0], p[1]) >= self.grid.dx.max(self.grid.dy);
        (converged && negative == 1 && clear).then(|| self.eval(&p).ok().map(|u| (p, u)))?
    }

    fn no_minimum_diagnostic(&self, z: f64) -> String {
        let g = self.grid;
        let (xc, _) = self.core.center();
        let mut prev: Option<f64> = None;
        let (mut rising, mut falling) = (0, 0);
        for j in 0..g.ny {
            let y = g.y(j);
            if y < self.surface_height() + g.dy.max(g.dx) {
                continue;
            }
            if let Ok(u) = self.potential_at(xc, y, z) {
                if let Some(p) = prev {
                    if u > p {
                        rising += 1;
                    } else if u < p {
                        falling += 1;
                    }
                }
                prev = Some(u);
            }
        }
        let shape = match (rising, falling) {
            (_, 0) => "increases monotonically",
            (0, _) => "decreases monotonically",
            _ => "is not monotone but has no interior local minimum",
        };
        format!("the potential above the core centre {shape} with height")
    }

    /// Locates, refines and measures the deepest minimum above the core's
    /// top face in `map`.
    pub fn find_trap_minimum(&self, map: &PotentialMap, kind: TrapKind) -> Result<TrapMinimum> {
        let core = self.core;
        let top = self.surface_height();
        let candidates = map.local_minima(|x, y| y > top && x >= core.x0 && x <= core.x1);
        let &seed = candidates.first().ok_or_else(|| Error::NoTrapMinimum(self.no_minimum_diagnostic(map.z[0])))?;
        let spill = map.escape_cell(seed)?;
        let (si, sj, sk) = map.coords(spill);
        let grid_escape = [map.grid.x(si), map.grid.y(sj), map.z[sk]];
        let mut buf = Vec::new();
        let refined_escape = if map.is_exit(spill, &mut buf) {
            None
        } else {
            self.refine_saddle(grid_escape, kind.dims(), self.steps(map))
        };
        let (escape, level) = refined_escape.unwrap_or((grid_escape, map.total[spill]));
        let (i, j, k) = map.coords(seed);
        let start = [map.grid.x(i), map.grid.y(j), map.z[k]];
        let dims = kind.dims();
        let (p, gradient_norm) = self.refine(start, dims, self.steps(map))?;
        let refined = self.eval(&p)?;
        let (p, potential) = if refined <= map.total[seed] { (p, refined) } else { (start, map.total[seed]) };
        Ok(TrapMinimum {
            x: p[0],
            y: p[1],
            z: p[2],
            standoff: p[1] - top,
            potential,
            depth: level - potential,
            gradient_norm,
            escape,
            escape_refined: refined_escape.is_some(),
        })
    }

    fn steps(&self, map: &PotentialMap) -> Steps {
        let hz = if map.nz() > 1 { map.z[1] - map.z[0] } else { self.grid.dx };
        Steps([0.5 * self.grid.dx, 0.5 * self.grid.dy, 0.5 * hz])
    }

    /// Figures of merit at a located minimum.
    pub fn trap_report(&self, minimum: &TrapMinimum, kind: TrapKind) -> Result<TrapReport> {
        if !(minimum.depth > 0.0) {
            return Err(Error::InvalidTrap(format!("non-positive depth {:.3e} J", minimum.depth)));
        }
        let atom = &self.config.atom;
        let p = [minimum.x, minimum.y, minimum.z];
        let dims = kind.dims();
        let hz = self.red_period()?.map_or(self.grid.dx, |l| l / 100.0);
        let h = Steps([self.grid.dx, self.grid.dy, hz]);
        let (_, hess) = self.gradient_hessian(&p, dims, h)?;
        let eig = hess.symmetric_eigen();
        let mut omega = [0.0f64; 3];
        let mut curvature = [0.0f64; 3];
        for c in 0..dims {
            let lam = eig.eigenvalues[c];
            if !(lam > 0.0) {
                return Err(Error::InvalidTrap(format!("Hessian eigenvalue {lam:.3e} J/m² is not positive")));
            }
            let v = eig.eigenvectors.column(c);
            let axis = (0..dims).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(c);
            curvature[axis] = lam;
            omega[axis] = (lam / atom.mass).sqrt();
        }
        let localization = omega.map(|w| if w > 0.0 { (HBAR / (atom.mass * w)).sqrt() } else { f64::INFINITY });
        let (g_red, g_blue) = self.scattering_at(p[0], p[1], p[2])?;
        let gamma = g_red + g_blue;
        let er_red = recoil_energy(atom, self.config.red.wavelength().unwrap_or(f64::NAN))?;
        let er_blue = recoil_energy(atom, self.config.blue.wavelength().unwrap_or(f64::NAN))?;
        let heating = er_red * g_red + er_blue * g_blue;
        let lifetime = minimum.depth / heating;
        let c = self.components_at(p[0], p[1], p[2])?;
        let max_omega = omega.iter().copied().fold(0.0, f64::max);
        Ok(TrapReport {
            kind,
            minimum: *minimum,
            standoff: minimum.standoff,
            depth_uk: joules_to_microkelvin(minimum.depth),
            potential_uk: joules_to_microkelvin(minimum.potential),
            components_uk: [c.red, c.blue, c.surface, c.gravity].map(joules_to_microkelvin),
            curvature,
            omega,
            trap_frequency_hz: omega.map(|w| w / (2.0 * PI)),
            localization,
            gamma_red: g_red,
            gamma_blue: g_blue,
            gamma,
            coherence_time: 1.0 / gamma,
            lifetime,
            lifetime_dissipation: 0.5 * lifetime,
            recoil_red_uk: joules_to_microkelvin(er_red),
            recoil_blue_uk: joules_to_microkelvin(er_blue),
            mode_spacing_uk: joules_to_microkelvin(HBAR * max_omega),
        })
    }
}

/// Figures of merit at one trap minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub kind: TrapKind,
    pub minimum: TrapMinimum,
    /// m.
    pub standoff: f64,
    pub depth_uk: f64,
    pub potential_uk: f64,
    /// Red, blue, surface and gravity parts of the potential at the minimum.
    pub components_uk: [f64; 4],
    /// Hessian eigenvalues assigned to the nearest axis `(x, y, z)`, J/m².
    pub curvature: [f64; 3],
    /// rad/s; zero along an unconfined axis.
    pub omega: [f64; 3],
    pub trap_frequency_hz: [f64; 3],
    /// `√(ħ/mω)`, m.
    pub localization: [f64; 3],
    /// s⁻¹.
    pub gamma_red: f64,
    pub gamma_blue: f64,
    pub gamma: f64,
    /// `1/Γ`, s.
    pub coherence_time: f64,
    /// `U_D/(E_r,red·Γ_red + E_r,blue·Γ_blue)`, s.
    pub lifetime: f64,
    /// Half of `lifetime`, the convention with a factor 2 in the heating rate.
    pub lifetime_dissipation: f64,
    pub recoil_red_uk: f64,
    pub recoil_blue_uk: f64,
    /// `ħ·max(ω)/k_B`.
    pub mode_spacing_uk: f64,
}

/// Trap seen along a single vertical line, ignoring lateral escape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTrap {
    pub x: f64,
    pub z: f64,
    /// m.
    pub standoff: f64,
    pub potential_uk: f64,
    /// Lower of the barrier toward the surface and the highest point above.
    pub depth_uk: f64,
    /// s⁻¹.
    pub gamma: f64,
    /// Same convention as [`TrapReport::lifetime`], s.
    pub lifetime: f64,
    /// rad/s.
    pub omega_y: f64,
}

/// Lowest local minimum of `U(x, y, z)` along `y` above the core's top face,
/// sampled every quarter cell and refined by a parabola.
pub fn vertical_profile(landscape: &Landscape, x: f64, z: f64) -> Result<ProfileTrap> {
    let g = landscape.grid();
    let top = landscape.surface_height();
    let h = 0.25 * g.dy;
    let y0 = top + g.dy.max(g.dx);
    let n = ((g.y_max() - 2.0 * g.dy - y0) / h).floor() as usize;
    let ys: Vec<f64> = (0..n).map(|k| y0 + k as f64 * h).collect();
    let us: Vec<f64> = ys.iter().map(|&y| landscape.potential_at(x, y, z)).collect::<Result<_>>()?;
    let k = (1..n.saturating_sub(1))
        .filter(|&k| us[k] < us[k - 1] && us[k] <= us[k + 1])
        .min_by(|&a, &b| us[a].total_cmp(&us[b]))
        .ok_or_else(|| Error::NoTrapMinimum(format!("no minimum along the vertical line x = {x:.3e} m")))?;
    let below = us[..k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let above = us[k..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (a, b, c) = (us[k - 1], us[k], us[k + 1]);
    let curv = (a - 2.0 * b + c) / (h * h);
    let shift = if curv > 0.0 { 0.5 * h * (a - c) / (a - 2.0 * b + c) } else { 0.0 };
    let y = ys[k] + shift;
    let u = landscape.potential_at(x, y, z)?.min(b);
    let depth = below.min(above) - u;
    let atom = &landscape.config().atom;
    let (gr, gb) = landscape.scattering_at(x, y, z)?;
    let er = recoil_energy(atom, landscape.config().red.wavelength().unwrap_or(f64::NAN))?;
    let eb = recoil_energy(atom, landscape.config().blue.wavelength().unwrap_or(f64::NAN))?;
    Ok(ProfileTrap {
        x,
        z,
        standoff: y - top,
        potential_uk: joules_to_microkelvin(u),
        depth_uk: joules_to_microkelvin(depth),
        gamma: gr + gb,
        lifetime: depth / (er * gr + eb * gb),
        omega_y: (curv.max(0.0) / atom.mass).sqrt(),
    })
}

/// Transverse guide trap at `z = 0` over the full grid.
pub fn analyze_guide(landscape: &Landscape) -> Result<(TrapReport, PotentialMap)> {
    if landscape.red_period()?.is_some() {
        return Err(Error::Config("red light is z-modulated; use the lattice analysis".into()));
    }
    let map = landscape.potential_map(landscape.full_window(), &[0.0], false)?;
    let min = landscape.find_trap_minimum(&map, TrapKind::Guide)?;
    Ok((landscape.trap_report(&min, TrapKind::Guide)?, map))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptions {
    pub stations_per_period: usize,
    /// Lateral margin of the analysis window beyond the core sides, m.
    pub lateral_margin: f64,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        Self { stations_per_period: 50, lateral_margin: 0.6e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeReport {
    /// `2π/Δβ`, m; `None` when the red light has no beat.
    pub period: Option<f64>,
    pub site: TrapReport,
    /// max − min of the potential along `z` through the site, μK.
    pub corrugation_uk: f64,
    /// True when the red light is a single mode and the guide analysis ran.
    pub degenerate: bool,
}

/// Lattice site analysis over one beat period. A single-mode red field
/// falls back to the guide analysis and is flagged `degenerate`.
pub fn analyze_lattice(landscape: &Landscape, opts: &LatticeOptions) -> Result<(LatticeReport, PotentialMap)> {
    let Some(period) = landscape.red_period()? else {
        let (site, map) = analyze_guide(landscape)?;
        return Ok((LatticeReport { period: None, site, corrugation_uk: 0.0, degenerate: true }, map));
    };
    let n = opts.stations_per_period.max(8);
    let window = landscape.core_window(opts.lateral_margin);
    let z: Vec<f64> = (0..n).map(|k| k as f64 * period / n as f64).collect();
    let periodic = landscape.potential_map(window, &z, true)?;
    let core = landscape.core();
    let top = landscape.surface_height();
    let candidates = periodic.local_minima(|x, y| y > top && x >= core.x0 && x <= core.x1);
    let &seed = candidates
        .first()
        .ok_or_else(|| Error::NoTrapMinimum(landscape.no_minimum_diagnostic(0.0)))?;
    let (_, _, ks) = periodic.coords(seed);
    // Re-centre one period on the site; the open z faces lead to the
    // neighbouring sites.
    let shift = (ks + n - n / 2) % n;
    let zc: Vec<f64> = (0..n).map(|k| z[(k + shift) % n] + if k + shift >= n { period } else { 0.0 }).collect();
    let plane = periodic.grid.len();
    let mut centred = PotentialMap { z: zc, periodic: false, ..periodic.clone() };
    for k in 0..n {
        let src = (k + shift) % n;
        centred.total[k * plane..(k + 1) * plane].copy_from_slice(&periodic.total[src * plane..(src + 1) * plane]);
        centred.red[k * plane..(k + 1) * plane].copy_from_slice(&periodic.red[src * plane..(src + 1) * plane]);
    }
    let min = landscape.find_trap_minimum(&centred, TrapKind::Lattice)?;
    let site = landscape.trap_report(&min, TrapKind::Lattice)?;
    let along: Vec<f64> = (0..4 * n)
        .map(|k| landscape.potential_at(min.x, min.y, min.z + k as f64 * period / (4 * n) as f64))
        .collect::<Result<_>>()?;
    let hi = along.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = along.iter().copied().fold(f64::INFINITY, f64::min);
    let corrugation_uk = joules_to_microkelvin(hi - lo);
    Ok((LatticeReport { period: Some(period), site, corrugation_uk, degenerate: false }, centred))
}

/// One row of a red-power sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// W.
    pub red_power: f64,
    pub report: Option<TrapReport>,
    pub error: Option<String>,
}

/// Guide analyses with the red field rescaled to each total power; rows
/// follow `red_powers`.
pub fn power_sweep(landscape: &Landscape, red_powers: &[f64]) -> Result<Vec<SweepRow>> {
    let base = landscape.config().red.total_power();
    if !(base > 0.0) {
        return Err(Error::Config("the red template carries no power to rescale".into()));
    }
    red_powers
        .par_iter()
        .map(|&p| {
            let l = landscape.with_red(landscape.config().red.scaled(p / base))?;
            Ok(match analyze_guide(&l) {
                Ok((r, _)) => SweepRow { red_power: p, report: Some(r), error: None },
                Err(e @ (Error::NoTrapMinimum(_) | Error::InvalidTrap(_))) => {
                    SweepRow { red_power: p, report: None, error: Some(e.to_string()) }
                }
                Err(e) => return Err(e),
            })
        })
        .collect()
}

/// True when standoff strictly falls and depth strictly rises along the rows.
pub fn sweep_is_monotone(rows: &[SweepRow]) -> bool {
    let reps: Option<Vec<&TrapReport>> = rows.iter().map(|r| r.report.as_ref()).collect();
    let Some(reps) = reps else { return false };
    reps.windows(2).all(|w| w[1].standoff < w[0].standoff && w[1].depth_uk > w[0].depth_uk)
}

/// Depth as a function of the surface permittivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSensitivity {
    pub permittivity: f64,
    pub depth_uk: f64,
    pub standoff: f64,
}

pub fn surface_sensitivity(landscape: &Landscape, permittivities: &[f64]) -> Result<Vec<SurfaceSensitivity>> {
    permittivities
        .iter()
        .map(|&eps| {
            let s = SurfaceParams { permittivity: eps, ..landscape.config().surface };
            let l = landscape.with_surface(s)?;
            let report = if l.red_period()?.is_some() {
                analyze_lattice(&l, &LatticeOptions::default())?.0.site
            } else {
                analyze_guide(&l)?.0
            };
            Ok(SurfaceSensitivity { permittivity: eps, depth_uk: report.depth_uk, standoff: report.standoff })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rb() -> AtomSpecies {
        AtomSpecies::rubidium_87()
    }

    #[test]
    fn dipole_signs_and_zero() {
        assert_eq!(dipole_potential(0.0, &rb(), 865e-9).unwrap(), 0.0);
        assert!(dipole_potential(1e9, &rb(), 865e-9).unwrap() < 0.0);
        assert!(dipole_potential(1e9, &rb(), 700e-9).unwrap() > 0.0);
        assert!(dipole_potential(1e9, &rb(), 780.25e-9).is_err());
    }

    #[test]
    fn surface_limits() {
        let s = SurfaceParams::silicon(&rb());
        let atom = rb();
        let strength = (s.permittivity - 1.0) / (s.permittivity + 1.0) * 0.113 * HBAR * atom.gamma_d2;
        let l = 1e-12;
        let z = 2.0 * PI * l / s.reference_wavelength;
        assert_relative_eq!(surface_potential(l, &atom, &s).unwrap() * z.powi(3), -strength, max_relative = 1e-9);
        let far = 3e-6;
        let r = surface_potential(2.0 * far, &atom, &s).unwrap() / surface_potential(far, &atom, &s).unwrap();
        assert_relative_eq!(r, 1.0 / 16.0, max_relative = 1e-12);
        assert!(surface_potential(0.0, &atom, &s).is_err());
        assert_eq!(surface_potential(1e-7, &atom, &SurfaceParams::disabled()).unwrap(), 0.0);
    }

    #[test]
    fn surface_continuation_is_continuous() {
        let s = SurfaceParams::silicon(&rb());
        let l0 = SURFACE_BRACKET_LIMIT * s.reference_wavelength / (2.0 * PI);
        let a = surface_potential(l0 * (1.0 - 1e-9), &rb(), &s).unwrap();
        let b = surface_potential(l0 * (1.0 + 1e-9), &rb(), &s).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-7);
    }

    fn walled_map(profile: &[f64]) -> PotentialMap {
        // Five rows; the profile runs along the middle row between walls.
        let nx = profile.len() + 2;
        let grid = SimulationGrid::new(nx, 5, 1.0, 1.0, 0.0, 0.0).unwrap();
        let mut total = vec![10.0; nx * 5];
        total[2 * nx + 1..2 * nx + 1 + profile.len()].copy_from_slice(profile);
        let n = total.len();
        PotentialMap {
            grid,
            z: vec![0.0],
            periodic: false,
            total,
            red: vec![0.0; n],
            blue: vec![0.0; n],
            surface: vec![0.0; n],
            gravity: vec![0.0; n],
        }
    }

    #[test]
    fn flooding_a_double_well() {
        let map = walled_map(&[-2.0, -3.0, -2.0, -1.0, -2.0, -4.0, -5.0, -4.0]);
        // The shallow well spills into the deeper one over the barrier.
        assert_eq!(map.escape_level(map.index(2, 2, 0)).unwrap(), -1.0);
        // The deep well only escapes over the walls.
        assert_eq!(map.escape_level(map.index(7, 2, 0)).unwrap(), 10.0);
        let minima = map.local_minima(|_, _| true);
        assert_eq!(minima, vec![map.index(7, 2, 0), map.index(2, 2, 0)]);
    }

    #[test]
    fn masked_neighbours_are_exits() {
        let mut map = walled_map(&[-2.0, -3.0, -2.0, -1.0, -2.0]);
        let wall = map.index(5, 2, 0);
        map.total[wall] = f64::NAN;
        // Cell 4 touches the mask, so the well spills at its value.
        assert_eq!(map.escape_level(map.index(2, 2, 0)).unwrap(), -1.0);
    }
}
