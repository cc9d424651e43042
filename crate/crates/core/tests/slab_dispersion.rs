//! A core spanning the whole width reduces to a symmetric slab times the
//! lowest Dirichlet mode across `x`, whose discrete eigenvalue is known in
//! closed form.

use std::f64::consts::PI;

use evatrap_core::geometry::{Rect, Region, Structure};
use evatrap_core::grid::SimulationGrid;
use evatrap_core::modes::{solve_structure_modes, ModeSolverOptions, Polarization};

/// Fundamental TE effective index of a symmetric slab by bisection on
/// `u·tan u = √(V² − u²)`.
fn slab_neff(n_core: f64, n_clad: f64, thickness: f64, wavelength: f64) -> f64 {
    let k0 = 2.0 * PI / wavelength;
    let v = 0.5 * k0 * thickness * (n_core * n_core - n_clad * n_clad).sqrt();
    let f = |u: f64| u * u.tan() - (v * v - u * u).sqrt();
    let (mut lo, mut hi) = (1e-12, v.min(0.5 * PI - 1e-12));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let kappa = 2.0 * lo / thickness;
    (n_core * n_core - (kappa / k0).powi(2)).sqrt()
}

#[test]
fn full_width_core_matches_the_slab_relation() {
    faer::set_global_parallelism(faer::Par::Seq);
    let (nx, dx, dy) = (3usize, 1e-6, 2.5e-9);
    let grid = SimulationGrid::new(nx, 1200, dx, dy, -1.5e-6, -1.65e-6).unwrap();
    for (h, lambda) in [(0.3e-6, 865e-9), (0.3e-6, 700e-9), (0.2e-6, 865e-9)] {
        let structure = Structure {
            background: 1.0,
            regions: vec![Region { rect: Rect::new(f64::NEG_INFINITY, f64::INFINITY, -h, 0.0), index: 3.42 }],
        };
        let label_box = Rect::new(-1.5e-6, 1.5e-6, -h, 0.0);
        let opts = ModeSolverOptions { max_modes: 1, ..Default::default() };
        let sol =
            solve_structure_modes(&structure, label_box, 1.0, &grid, lambda, Polarization::TE, &opts).unwrap();
        let lambda_x = -4.0 / (dx * dx) * (PI / (2.0 * (nx as f64 + 1.0))).sin().powi(2);
        let beta_slab = (sol.modes[0].beta.powi(2) - lambda_x).sqrt();
        let oracle = slab_neff(3.42, 1.0, h, lambda) * 2.0 * PI / lambda;
        let rel = (beta_slab - oracle).abs() / oracle;
        assert!(rel < 5e-3, "h = {h}, λ = {lambda}: β = {beta_slab:.6e}, slab {oracle:.6e}, rel {rel:.2e}");
    }
}

#[test]
fn oracle_is_self_consistent() {
    // Thin-slab limit approaches the cladding index, thick slab the core index.
    assert!(slab_neff(3.42, 1.0, 1e-9, 865e-9) < 1.01);
    assert!(slab_neff(3.42, 1.0, 20e-6, 865e-9) > 3.41);
}
