mod common;

use evatrap_core::geometry::{build_index_profile, WaveguideGeometry};
use evatrap_core::grid::SimulationGrid;
use evatrap_core::modes::*;

#[test]
fn residuals_orthogonality_and_ordering() {
    let m = common::fine();
    for mode in m.red.iter().chain([&m.blue]) {
        assert!(mode.residual < 1e-6, "{} residual {:.2e}", mode.label, mode.residual);
        assert!((mode.carried_power() - 1.0).abs() < 1e-10);
    }
    for (a, b) in m.red.iter().zip(m.red.iter().skip(1)) {
        assert!(a.beta > b.beta);
    }
    for (i, a) in m.red.iter().enumerate() {
        for b in &m.red[i + 1..] {
            let o = mode_overlap(a, b).unwrap().abs();
            assert!(o < 1e-6, "{} · {} = {o:.2e}", a.label, b.label);
        }
    }
}

#[test]
fn labels_follow_nodal_lines() {
    let m = common::fine();
    let labels: Vec<ModeLabel> = m.red.iter().map(|r| r.label).collect();
    assert_eq!(labels[0], ModeLabel::TE00);
    assert!(labels.contains(&ModeLabel::TE01) && labels.contains(&ModeLabel::TE10));
    assert_eq!(m.blue.label, ModeLabel::TE00);
}

#[test]
fn decay_lengths_order_and_scalar_cross_check() {
    let m = common::fine();
    let l00 = decay_length(&m.red(ModeLabel::TE00), None).unwrap();
    let l01 = decay_length(&m.red(ModeLabel::TE01), None).unwrap();
    assert!(l01 > l00);
    for (mode, fit) in [(m.red(ModeLabel::TE00), l00), (m.red(ModeLabel::TE01), l01)] {
        let scalar = decay_length_scalar_estimate(&mode).unwrap();
        assert!((fit - scalar).abs() / scalar < 0.15, "{}: fit {fit:.3e} scalar {scalar:.3e}", mode.label);
    }
}

#[test]
fn core_cell_count_matches_geometry() {
    let geo = WaveguideGeometry::soi_default();
    let grid = SimulationGrid::centered(7e-9, 2e-6, 3e-6, 1.2e-6).unwrap();
    let n = build_index_profile(&geo, &grid).unwrap();
    let count = n.values.iter().filter(|&&v| v == geo.core_index).count() as f64;
    let (cols, rows) = (geo.core_width / grid.dx, geo.core_height / grid.dy);
    let exact = cols * rows;
    assert!((count - exact).abs() <= cols + rows + 1.0, "{count} vs {exact}");
    assert_eq!(n.get(grid.nearest_column(0.0), grid.nearest_row(-0.15e-6)), 3.42);
    assert_eq!(n.get(grid.nearest_column(0.0), grid.nearest_row(1e-6)), 1.0);
}

#[test]
fn single_wavelength_scan_reproduces_the_solver() {
    let geo = WaveguideGeometry::soi_default();
    let grid = SimulationGrid::centered(20e-9, 3e-6, 3e-6, 1.35e-6).unwrap();
    let rows = dispersion_scan(&geo, &grid, &[865e-9], &[ModeLabel::TE00, ModeLabel::TE01]).unwrap();
    // The scan asks for (highest order + 1)² + 2 modes: four here.
    let direct = solve_modes(&geo, &grid, 865e-9, Polarization::TE, 4).unwrap();
    let beta = |l: ModeLabel| direct.iter().find(|m| m.label == l).map(|m| m.beta);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].beta, beta(ModeLabel::TE00));
    assert_eq!(rows[1].beta, beta(ModeLabel::TE01));
}

#[test]
fn decay_length_grows_with_wavelength() {
    let geo = WaveguideGeometry::soi_default();
    let grid = SimulationGrid::centered(10e-9, 3e-6, 3e-6, 1.35e-6).unwrap();
    let rows = dispersion_scan(&geo, &grid, &[700e-9, 800e-9, 900e-9], &[ModeLabel::TE00]).unwrap();
    let l: Vec<f64> = rows.iter().map(|r| r.decay_length.unwrap()).collect();
    assert!(l[0] < l[1] && l[1] < l[2], "{l:?}");
}
