//! Wide-angle finite-difference beam propagation.
//!
//! The field is written `E = ψ·e^{ik̄z}` with `k̄ = k₀·n_ref`. One-way
//! propagation `∂_zψ = ik̄[√(1 + X) − 1]ψ`, `X = (∇⊥² + k₀²n² − k̄²)/k̄²`, uses
//! the (2,2) Padé form `(X/2 + X²/4)/(1 + 3X/4 + X²/16)` and Crank-Nicolson
//! stepping. Both sides of each step are quadratics in `X`, so they split into
//! two first-order factors: two sparse LU factorizations are made once and
//! each step costs two solves and two sparse products.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::field::{integrated_power, INTENSITY_FACTOR};
use crate::grid::FieldMap;
use crate::physics::wavenumber;
use crate::sparse::{to_faer, CsrMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpmRun {
    pub launch: FieldMap<Complex64>,
    pub wavelength: f64,
    /// Step along `z`, m.
    pub dz: f64,
    /// Total propagation length, m.
    pub z_extent: f64,
    /// Index defining the envelope wavenumber `k̄ = k₀·n_ref`.
    pub reference_index: f64,
    /// Width of the graded absorbing frame at the box edges, m.
    pub absorber_width: f64,
    /// Peak imaginary part added to `n²` at the outer edge.
    pub absorber_strength: f64,
    /// Stations at which full snapshots are stored, m.
    pub snapshot_stations: Vec<f64>,
    /// Points where the field is recorded after every step.
    pub probes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpmResult {
    pub snapshots: Vec<(f64, FieldMap<Complex64>)>,
    /// Propagation distance after each step, starting at 0.
    pub z: Vec<f64>,
    /// Transverse power at each entry of `z`, W.
    pub power: Vec<f64>,
    /// Full field `E = ψ·e^{ik̄z}` at every probe, one series per probe.
    pub probe_fields: Vec<Vec<Complex64>>,
}

impl BpmResult {
    /// Intensity trace `I(z)` at probe `k`, W/m².
    pub fn probe_intensity(&self, k: usize) -> Vec<f64> {
        self.probe_fields[k].iter().map(|v| INTENSITY_FACTOR * v.norm_sqr()).collect()
    }
}

impl BpmRun {
    fn validate(&self, index: &FieldMap<f64>) -> Result<()> {
        if index.grid != self.launch.grid {
            return Err(Error::Config("launch field and index map use different grids".into()));
        }
        if !(self.dz > 0.0) || !(self.z_extent >= 0.0) {
            return Err(Error::Config(format!("need dz > 0 and z_extent ≥ 0, got {} and {}", self.dz, self.z_extent)));
        }
        let g = index.grid;
        if self.absorber_width < 10.0 * g.dx.max(g.dy) {
            return Err(Error::Config("absorber must span at least 10 cells".into()));
        }
        if !(self.reference_index > 0.0) || !(self.wavelength > 0.0) {
            return Err(Error::Config("reference index and wavelength must be positive".into()));
        }
        Ok(())
    }
}

/// Roots `r` of `1 + a₁X + a₂X²`, so that it equals `(1 − X/r₁)(1 − X/r₂)`.
fn quadratic_roots(a1: Complex64, a2: Complex64) -> [Complex64; 2] {
    let disc = (a1 * a1 - 4.0 * a2).sqrt();
    [(-a1 + disc) / (2.0 * a2), (-a1 - disc) / (2.0 * a2)]
}

/// Marches `run.launch` through the index profile.
pub fn bpm_propagate(run: &BpmRun, index: &FieldMap<f64>) -> Result<BpmResult> {
    run.validate(index)?;
    let g = index.grid;
    let k0 = wavenumber(run.wavelength);
    let kbar = k0 * run.reference_index;
    let (cx, cy) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let w = run.absorber_width;
    let absorb = |x: f64, y: f64| {
        let d = (x - g.x_min).min(g.x_max() - x).min(y - g.y_min).min(g.y_max() - y);
        if d < w {
            run.absorber_strength * ((w - d) / w).powi(2)
        } else {
            0.0
        }
    };

    // X = P/k̄² on the grid.
    let mut t = Vec::with_capacity(5 * g.len());
    let s = 1.0 / (kbar * kbar);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let p = g.index(i, j);
            let n2 = Complex64::new(index.get(i, j).powi(2), absorb(g.x(i), g.y(j)));
            let diag = (n2 * k0 * k0 - kbar * kbar - 2.0 * (cx + cy)) * s;
            t.push((p, p, diag));
            let off = [
                (i > 0, i.wrapping_sub(1), j, cx),
                (i + 1 < g.nx, i + 1, j, cx),
                (j > 0, i, j.wrapping_sub(1), cy),
                (j + 1 < g.ny, i, j + 1, cy),
            ];
            for (ok, ii, jj, c) in off {
                if ok {
                    t.push((p, g.index(ii, jj), Complex64::new(c * s, 0.0)));
                }
            }
        }
    }
    let x_op = CsrMatrix::from_triplets(g.len(), t);

    // Crank-Nicolson: (D − iδN)ψ⁺ = (D + iδN)ψ with δ = k̄·dz/2.
    let delta = Complex64::new(0.0, 0.5 * kbar * run.dz);
    let lhs_roots = quadratic_roots(0.75 - delta * 0.5, 1.0 / 16.0 - delta * 0.25);
    let rhs_roots = quadratic_roots(0.75 + delta * 0.5, 1.0 / 16.0 + delta * 0.25);
    let one = Complex64::new(1.0, 0.0);
    let factor = |r: Complex64| x_op.shifted(one, -one / r);
    let lhs: Vec<_> = lhs_roots
        .iter()
        .map(|&r| {
            to_faer(&factor(r))?.sp_lu().map_err(|e| Error::LinearAlgebra(format!("BPM factorization failed: {e:?}")))
        })
        .collect::<Result<_>>()?;
    let rhs: Vec<CsrMatrix<Complex64>> = rhs_roots.iter().map(|&r| factor(r)).collect();

    let steps = (run.z_extent / run.dz).round() as usize;
    let mut psi = run.launch.values.clone();
    let mut tmp = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut col = Mat::<Complex64>::zeros(g.len(), 1);
    let mut stations: Vec<f64> = run.snapshot_stations.clone();
    stations.sort_by(f64::total_cmp);
    let mut next_station = 0usize;

    let mut result = BpmResult {
        snapshots: Vec::new(),
        z: Vec::with_capacity(steps + 1),
        power: Vec::with_capacity(steps + 1),
        probe_fields: vec![Vec::with_capacity(steps + 1); run.probes.len()],
    };
    let record = |psi: &[Complex64], z: f64, result: &mut BpmResult, next_station: &mut usize| -> Result<f64> {
        let fm = FieldMap { grid: g, values: psi.to_vec() };
        let phase = Complex64::from_polar(1.0, kbar * z);
        let p = integrated_power(&fm);
        result.z.push(z);
        result.power.push(p);
        for (k, &(px, py)) in run.probes.iter().enumerate() {
            result.probe_fields[k].push(fm.sample_bilinear(px, py)? * phase);
        }
        while *next_station < stations.len() && stations[*next_station] <= z + 0.5 * run.dz {
            let full = fm.map(|v| v * phase);
            result.snapshots.push((z, full));
            *next_station += 1;
        }
        Ok(p)
    };

    let mut last_power = record(&psi, 0.0, &mut result, &mut next_station)?;
    for step in 1..=steps {
        for (r, lu) in rhs.iter().zip(&lhs) {
            r.matvec(&psi, &mut tmp);
            for (i, v) in tmp.iter().enumerate() {
                col[(i, 0)] = *v;
            }
            lu.solve_in_place(col.as_mut());
            for (i, p) in psi.iter_mut().enumerate() {
                *p = col[(i, 0)];
            }
        }
        let z = step as f64 * run.dz;
        let p = record(&psi, z, &mut result, &mut next_station)?;
        if last_power > 0.0 && p > last_power * (1.0 + 1e-3) {
            return Err(Error::Unstable { z, growth: p / last_power - 1.0 });
        }
        last_power = p;
    }
    Ok(result)
}

/// Correlation `|⟨a, b⟩|² / (⟨a, a⟩⟨b, b⟩)` of two intensity maps.
pub fn intensity_correlation(a: &FieldMap<Complex64>, b: &FieldMap<Complex64>) -> f64 {
    let ia: Vec<f64> = a.values.iter().map(|v| v.norm_sqr()).collect();
    let ib: Vec<f64> = b.values.iter().map(|v| v.norm_sqr()).collect();
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
    dot(&ia, &ib) / (dot(&ia, &ia) * dot(&ib, &ib)).sqrt()
}

/// Propagation constant from the unwrapped phase slope of a probe series.
pub fn phase_slope(z: &[f64], field: &[Complex64]) -> Result<f64> {
    if z.len() != field.len() || z.len() < 3 {
        return Err(Error::Fit("need at least three samples".into()));
    }
    let mut phase = Vec::with_capacity(field.len());
    let mut prev = field[0].arg();
    let mut offset = 0.0;
    for v in field {
        let a = v.arg();
        let mut d = a - prev;
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
            offset -= 2.0 * std::f64::consts::PI;
        }
        while d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
            offset += 2.0 * std::f64::consts::PI;
        }
        phase.push(a + offset);
        prev = a;
    }
    let n = z.len() as f64;
    let mz = z.iter().sum::<f64>() / n;
    let mp = phase.iter().sum::<f64>() / n;
    let num: f64 = z.iter().zip(&phase).map(|(a, b)| (a - mz) * (b - mp)).sum();
    let den: f64 = z.iter().map(|a| (a - mz).powi(2)).sum();
    Ok(num / den)
}
