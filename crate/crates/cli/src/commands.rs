//! One function per subcommand. Each writes its files into `out` and returns
//! the numbers that go into `report.json`.

use std::fs;
use std::path::Path;

use evatrap_core::bpm::{bpm_propagate, intensity_correlation, phase_slope, BpmRun};
use evatrap_core::control::{
    coupler_apply, modulator_phase, mzi_matrix, run_chain, superposition_vs_dn, supermode_coupling,
    unitarity_defect, ChainState, ModeVector, Stage,
};
use evatrap_core::export::{sweep_table, write_columns, write_json, write_mode, write_potential, write_rows, write_snapshot};
use evatrap_core::field::{beat_period, oscillation_period};
use evatrap_core::geometry::build_index_profile;
use evatrap_core::modes::{decay_length, dispersion_scan, relative_decay_difference, ModeLabel};
use evatrap_core::physics::joules_to_microkelvin;
use evatrap_core::transition::guide_lattice_transition;
use evatrap_core::trap::{
    analyze_guide, analyze_lattice, power_sweep, surface_sensitivity, sweep_is_monotone, vertical_profile, Landscape,
    PotentialMap, TrapReport,
};
use evatrap_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::report::ConvergenceDelta;
use crate::session::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Modes,
    Decay,
    Guide,
    Sweep,
    Lattice,
    Bpm,
    Mzi,
    Reproduce,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Modes => "modes",
            Command::Decay => "decay",
            Command::Guide => "guide",
            Command::Sweep => "sweep",
            Command::Lattice => "lattice",
            Command::Bpm => "bpm",
            Command::Mzi => "mzi",
            Command::Reproduce => "reproduce",
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub convergence: Vec<ConvergenceDelta>,
    pub warnings: Vec<String>,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
}

pub fn run(cmd: Command, s: &Session, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    match cmd {
        Command::Modes => modes(s, out),
        Command::Decay => decay(s, out),
        Command::Guide => guide(s, out),
        Command::Sweep => sweep(s, out),
        Command::Lattice => lattice(s, out),
        Command::Bpm => bpm(s, out),
        Command::Mzi => mzi(s, out),
        Command::Reproduce => Err(Error::Config("reproduce is dispatched by the front-end".into())),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

fn nm(x: f64) -> String {
    format!("{:.1} nm", x * 1e9)
}

fn coarse_step(s: &Session) -> Option<f64> {
    s.config.run.convergence_check.then_some(2.0 * s.grid.dx)
}

#[derive(Serialize)]
struct ModeRow {
    wavelength: f64,
    label: ModeLabel,
    beta: f64,
    effective_index: f64,
    residual: f64,
    decay_length: Option<f64>,
}

fn modes(s: &Session, out: &Path) -> Result<Outcome> {
    let c = &s.config;
    let mut o = Outcome::default();
    let wavelengths: Vec<f64> = if c.modes.wavelengths.is_empty() {
        vec![c.red.wavelength.0, c.blue.wavelength.0]
    } else {
        c.modes.wavelengths.iter().map(|l| l.0).collect()
    };
    let mut rows = Vec::new();
    if !s.geometry.can_guide() {
        o.warnings.push("the index profile has no guiding window; the mode table is empty".into());
    } else {
        if c.modes.dump_fields {
            fs::create_dir_all(out.join("fields"))?;
        }
        for &lambda in &wavelengths {
            for &pol in &c.modes.polarizations {
                let found = s.modes(&s.grid, lambda, pol, c.modes.max_modes)?;
                if found.is_empty() {
                    o.warnings.push(format!("no guided {pol:?} modes at {}", nm(lambda)));
                }
                for m in &found {
                    if c.modes.dump_fields {
                        write_mode(&out.join("fields"), &format!("{:.0}nm_{}", lambda * 1e9, m.label), m)?;
                    }
                    o.summary.push(format!(
                        "{:>9} {:<5} beta = {:.5e} 1/m  n_eff = {:.5}",
                        nm(lambda),
                        m.label.to_string(),
                        m.beta,
                        m.effective_index()
                    ));
                    rows.push(ModeRow {
                        wavelength: lambda,
                        label: m.label,
                        beta: m.beta,
                        effective_index: m.effective_index(),
                        residual: m.residual,
                        decay_length: decay_length(m, None).ok(),
                    });
                }
            }
        }
    }
    if rows.is_empty() {
        fs::write(out.join("modes.csv"), "wavelength,label,beta,effective_index,residual,decay_length\n")?;
    } else {
        write_rows(&out.join("modes.csv"), &rows)?;
    }
    if let (Some(step), false) = (coarse_step(s), rows.is_empty()) {
        let grid = s.grid_with_step(step)?;
        for r in &rows {
            if let Ok(m) = s.mode(&grid, r.wavelength, r.label) {
                o.convergence.push(ConvergenceDelta::new(format!("beta {} @ {}", r.label, nm(r.wavelength)), r.beta, m.beta));
            }
        }
    }
    o.results = json!({ "modes": rows });
    Ok(o)
}

#[derive(Serialize)]
struct DecayEndpoints {
    red_mode: ModeLabel,
    red_wavelength: f64,
    red_decay_length: f64,
    blue_mode: ModeLabel,
    blue_wavelength: f64,
    blue_decay_length: f64,
    alpha: f64,
}

fn decay(s: &Session, out: &Path) -> Result<Outcome> {
    let c = &s.config;
    let d = &c.decay;
    let mut o = Outcome::default();
    let wavelengths = linspace(d.start.0, d.stop.0, d.points);
    let rows = dispersion_scan(&s.geometry, &s.grid, &wavelengths, &d.labels)?;
    write_rows(&out.join("decay.csv"), &rows)?;

    let lr = decay_length(&*s.mode(&s.grid, c.red.wavelength.0, d.red_mode)?, None)?;
    let lb = decay_length(&*s.mode(&s.grid, c.blue.wavelength.0, d.blue_mode)?, None)?;
    let ends = DecayEndpoints {
        red_mode: d.red_mode,
        red_wavelength: c.red.wavelength.0,
        red_decay_length: lr,
        blue_mode: d.blue_mode,
        blue_wavelength: c.blue.wavelength.0,
        blue_decay_length: lb,
        alpha: relative_decay_difference(lr, lb)?,
    };
    o.summary.push(format!(
        "L({}, {}) = {:.2} nm, L({}, {}) = {:.2} nm, alpha_L = {:.3}",
        d.red_mode,
        nm(c.red.wavelength.0),
        lr * 1e9,
        d.blue_mode,
        nm(c.blue.wavelength.0),
        lb * 1e9,
        ends.alpha
    ));

    // L(TE01) > L(TM00) > L(TE00) wherever all three are guided.
    let order = [ModeLabel::TE01, ModeLabel::TM00, ModeLabel::TE00];
    let ordering = order.iter().all(|l| d.labels.contains(l)).then(|| {
        wavelengths.iter().all(|&w| {
            let get = |l: ModeLabel| {
                rows.iter().find(|r| r.wavelength == w && r.label == l).and_then(|r| r.decay_length)
            };
            match (get(order[0]), get(order[1]), get(order[2])) {
                (Some(a), Some(b), Some(c)) => a > b && b > c,
                _ => true,
            }
        })
    });
    if ordering == Some(false) {
        o.warnings.push("decay lengths do not follow L(TE01) > L(TM00) > L(TE00) at every wavelength".into());
    }
    o.results = json!({ "endpoints": ends, "ordering_holds": ordering, "rows": rows.len() });
    Ok(o)
}

fn write_slice(path: &Path, l: &Landscape, pts: &[(f64, f64)], along: &[f64], name: &str) -> Result<()> {
    let comps = pts.iter().map(|&(x, y)| l.components_at(x, y, 0.0)).collect::<Result<Vec<_>>>()?;
    let col = |f: &dyn Fn(&evatrap_core::trap::PotentialComponents) -> f64| -> Vec<f64> {
        comps.iter().map(|c| joules_to_microkelvin(f(c))).collect()
    };
    let (t, r, b, su, g) = (col(&|c| c.total()), col(&|c| c.red), col(&|c| c.blue), col(&|c| c.surface), col(&|c| c.gravity));
    write_columns(path, &[name, "U_total", "U_red", "U_blue", "U_sur", "U_grav"], &[along, &t, &r, &b, &su, &g])
}

/// Slices through the minimum along x (all columns) and y (rows above the core).
fn guide_slices(out: &Path, l: &Landscape, r: &TrapReport) -> Result<()> {
    let g = *l.grid();
    let xs: Vec<f64> = (0..g.nx).map(|i| g.x(i)).collect();
    let pts: Vec<_> = xs.iter().map(|&x| (x, r.minimum.y)).collect();
    write_slice(&out.join("slice_x.csv"), l, &pts, &xs, "x")?;
    let ys: Vec<f64> = (0..g.ny).map(|j| g.y(j)).filter(|&y| y >= l.surface_height() + g.dy).collect();
    let pts: Vec<_> = ys.iter().map(|&y| (r.minimum.x, y)).collect();
    write_slice(&out.join("slice_y.csv"), l, &pts, &ys, "y")
}

fn summarize_trap(o: &mut Outcome, r: &TrapReport) {
    let f = r.trap_frequency_hz.map(|v| v * 1e-3);
    o.summary.push(format!(
        "standoff {:.4} um, U_D {:.2} uK (U_min {:.2} uK), Gamma_sc {:.3} 1/s, tau_coh {:.1} ms",
        r.standoff * 1e6,
        r.depth_uk,
        r.potential_uk,
        r.gamma,
        r.coherence_time * 1e3
    ));
    o.summary.push(format!(
        "tau_trap {:.3} s (dissipation convention {:.3} s), omega/2pi = ({:.1}, {:.1}, {:.1}) kHz, hbar*omega_max {:.2} uK",
        r.lifetime, r.lifetime_dissipation, f[0], f[1], f[2], r.mode_spacing_uk
    ));
}

fn guide(s: &Session, out: &Path) -> Result<Outcome> {
    let c = &s.config;
    let mut o = Outcome::default();
    let l = s.landscape(&s.grid, &c.red.excitations)?;
    let (r, map) = analyze_guide(&l)?;
    write_potential(&out.join("potential.csv"), &map)?;
    guide_slices(out, &l, &r)?;
    write_json(&out.join("trap_report.json"), &r)?;
    let profile = vertical_profile(&l, r.minimum.x, 0.0).ok();
    let sensitivity = surface_sensitivity(&l, &c.surface.sensitivity)?;
    summarize_trap(&mut o, &r);
    if let Some(p) = &profile {
        o.summary.push(format!(
            "vertical profile: standoff {:.4} um, depth {:.2} uK, tau_trap {:.2} s",
            p.standoff * 1e6,
            p.depth_uk,
            p.lifetime
        ));
    }
    for e in &sensitivity {
        o.summary.push(format!("surface eps = {:.2}: U_D {:.2} uK, standoff {:.4} um", e.permittivity, e.depth_uk, e.standoff * 1e6));
    }
    if let Some(step) = coarse_step(s) {
        let grid = s.grid_with_step(step)?;
        match s.landscape(&grid, &c.red.excitations).and_then(|l| analyze_guide(&l)) {
            Ok((rc, _)) => {
                o.convergence.push(ConvergenceDelta::new("depth_uk", r.depth_uk, rc.depth_uk));
                o.convergence.push(ConvergenceDelta::new("standoff", r.standoff, rc.standoff));
            }
            Err(e) => o.warnings.push(format!("coarse-grid guide analysis failed: {e}")),
        }
    }
    o.results = json!({
        "report": r,
        "lifetimes": { "table": r.lifetime, "dissipation": r.lifetime_dissipation, "ratio": r.lifetime / r.lifetime_dissipation },
        "vertical_profile": profile,
        "surface_sensitivity": sensitivity,
    });
    Ok(o)
}

#[derive(Serialize)]
struct SweepCsv {
    red_power: f64,
    standoff: Option<f64>,
    depth_uk: Option<f64>,
    gamma: Option<f64>,
    lifetime: Option<f64>,
    lifetime_dissipation: Option<f64>,
    profile_standoff: Option<f64>,
    profile_depth_uk: Option<f64>,
    profile_lifetime: Option<f64>,
    error: Option<String>,
}

fn sweep(s: &Session, out: &Path) -> Result<Outcome> {
    let c = &s.config;
    let mut o = Outcome::default();
    let l = s.landscape(&s.grid, &c.red.excitations)?;
    let powers: Vec<f64> = c.sweep.red_powers.iter().map(|p| p.0).collect();
    let rows = power_sweep(&l, &powers)?;
    let base = l.config().red.total_power();
    let (xc, _) = l.core().center();
    let profiles: Vec<_> = powers
        .par_iter()
        .map(|&p| l.with_red(l.config().red.scaled(p / base)).and_then(|lp| vertical_profile(&lp, xc, 0.0)).ok())
        .collect();
    let table = sweep_table(&rows);
    fs::write(out.join("sweep.txt"), &table)?;
    let csv: Vec<SweepCsv> = rows
        .iter()
        .zip(&profiles)
        .map(|(r, p)| SweepCsv {
            red_power: r.red_power,
            standoff: r.report.as_ref().map(|t| t.standoff),
            depth_uk: r.report.as_ref().map(|t| t.depth_uk),
            gamma: r.report.as_ref().map(|t| t.gamma),
            lifetime: r.report.as_ref().map(|t| t.lifetime),
            lifetime_dissipation: r.report.as_ref().map(|t| t.lifetime_dissipation),
            profile_standoff: p.as_ref().map(|p| p.standoff),
            profile_depth_uk: p.as_ref().map(|p| p.depth_uk),
            profile_lifetime: p.as_ref().map(|p| p.lifetime),
            error: r.error.clone(),
        })
        .collect();
    write_rows(&out.join("sweep.csv"), &csv)?;
    let monotone = sweep_is_monotone(&rows);
    if !monotone {
        o.warnings.push("sweep is not monotone: standoff must fall and depth rise with red power".into());
    }
    o.summary.extend(table.lines().map(String::from));
    o.summary.push(format!("monotone: {monotone}"));
    o.results = json!({ "rows": rows, "vertical_profiles": profiles, "monotone": monotone });
    Ok(o)
}

/// `x,z,U` on the plane of grid row `j` and `y,z,U` on column `i`.
fn write_planes(out: &Path, map: &PotentialMap, i: usize, j: usize) -> Result<()> {
    let g = map.grid;
    let (mut a, mut b, mut u) = (vec![], vec![], vec![]);
    for k in 0..map.nz() {
        for ii in 0..g.nx {
            let n = map.index(ii, j, k);
            if !map.is_masked(n) {
                a.push(g.x(ii));
                b.push(map.z[k]);
                u.push(joules_to_microkelvin(map.total[n]));
            }
        }
    }
    write_columns(&out.join("plane_xz.csv"), &["x", "z", "U_total"], &[&a, &b, &u])?;
    let (mut a, mut b, mut u) = (vec![], vec![], vec![]);
    for k in 0..map.nz() {
        for jj in 0..g.ny {
            let n = map.index(i, jj, k);
            if !map.is_masked(n) {
                a.push(g.y(jj));
                b.push(map.z[k]);
                u.push(joules_to_microkelvin(map.total[n]));
            }
        }
    }
    write_columns(&out.join("plane_yz.csv"), &["y", "z", "U_total"], &[&a, &b, &u])
}

#[derive(Serialize)]
struct TransitionCsv {
    theta_over_pi: f64,
    p_te00: f64,
    p_te01: f64,
    probe_corrugation_uk: f64,
    site_depth_uk: Option<f64>,
    site_standoff: Option<f64>,
    degenerate: Option<bool>,
    error: Option<String>,
}

fn lattice(s: &Session, out: &Path) -> Result<Outcome> {
    let c = &s.config;
    let mut o = Outcome::default();
    let opts = c.lattice_options();
    let l = s.landscape(&s.grid, &c.lattice.excitations)?;
    let (r, map) = analyze_lattice(&l, &opts)?;
    let m = r.site.minimum;
    write_planes(out, &map, map.grid.nearest_column(m.x), map.grid.nearest_row(m.y))?;
    write_json(&out.join("lattice_report.json"), &r)?;
    summarize_trap(&mut o, &r.site);
    if r.degenerate {
        o.warnings.push("red light is a single mode: no z-modulation, guide analysis reported".into());
    }
    if let Some(p) = r.period {
        o.summary.push(format!("period {:.4} um, corrugation {:.2} uK, {} z-stations", p * 1e6, r.corrugation_uk, map.nz()));
    }
    let profile = vertical_profile(&l, m.x, m.z).ok();
    if let Some(p) = &profile {
        o.summary.push(format!("vertical profile at the site: depth {:.2} uK, tau_trap {:.2} s", p.depth_uk, p.lifetime));
    }

    let mut transition = Value::Null;
    if !c.lattice.transition_thetas.is_empty() {
        let lam = c.red.wavelength.0;
        let (te00, te01) = (s.mode(&s.grid, lam, ModeLabel::TE00)?, s.mode(&s.grid, lam, ModeLabel::TE01)?);
        let thetas: Vec<f64> = c.lattice.transition_thetas.iter().map(|a| a.0).collect();
        let total: f64 = c.lattice.excitations.iter().map(|e| e.power.0).sum();
        let probe = (l.core().center().0, l.surface_height() + c.lattice.probe_standoff.0);
        let pts = guide_lattice_transition(&l, &te00, &te01, &c.coupler_device(), &thetas, total, probe, &opts)?;
        let rows: Vec<TransitionCsv> = pts
            .iter()
            .map(|p| TransitionCsv {
                theta_over_pi: p.theta / std::f64::consts::PI,
                p_te00: p.populations[0],
                p_te01: p.populations[1],
                probe_corrugation_uk: p.probe_corrugation_uk,
                site_depth_uk: p.lattice.as_ref().map(|r| r.site.depth_uk),
                site_standoff: p.lattice.as_ref().map(|r| r.site.standoff),
                degenerate: p.lattice.as_ref().map(|r| r.degenerate),
                error: p.error.clone(),
            })
            .collect();
        write_rows(&out.join("transition.csv"), &rows)?;
        transition = serde_json::to_value(&pts)?;
    }

    if let Some(step) = coarse_step(s) {
        let grid = s.grid_with_step(step)?;
        match s.landscape(&grid, &c.lattice.excitations).and_then(|l| analyze_lattice(&l, &opts)) {
            Ok((rc, _)) => {
                o.convergence.push(ConvergenceDelta::new("depth_uk", r.site.depth_uk, rc.site.depth_uk));
                o.convergence.push(ConvergenceDelta::new("standoff", r.site.standoff, rc.site.standoff));
                if let (Some(a), Some(b)) = (r.period, rc.period) {
                    o.convergence.push(ConvergenceDelta::new("period", a, b));
                }
            }
            Err(e) => o.warnings.push(format!("coarse-grid lattice analysis failed: {e}")),
        }
    }
    o.results = json!({ "report": r, "vertical_profile": profile, "z_stations": map.nz(), "transition": transition });
    Ok(o)
}

fn bpm(s: &Session, out: &Path) -> Result<Outcome> {
    let c = &s.config;
    let b = &c.bpm;
    let mut o = Outcome::default();
    let grid = match b.grid_step {
        Some(step) => s.grid_with_step(step.0)?,
        None => s.grid,
    };
    let launch_list = if b.launch.is_empty() { &c.lattice.excitations } else { &b.launch };
    let lam = c.red.wavelength.0;
    let field = s.field(&grid, lam, launch_list)?;
    let lit: Vec<_> = field.excitations().iter().filter(|e| e.power > 0.0).collect();
    let total = field.total_power();
    let n_ref = b
        .reference_index
        .unwrap_or_else(|| lit.iter().map(|e| e.power * e.mode.effective_index()).sum::<f64>() / total);
    let launch = field.superpose(0.0)?;
    let run = BpmRun {
        launch: launch.clone(),
        wavelength: lam,
        dz: b.dz.0,
        z_extent: b.z_extent.0,
        reference_index: n_ref,
        absorber_width: b.absorber_width.0,
        absorber_strength: b.absorber_strength,
        snapshot_stations: b.snapshots.iter().map(|z| z.0).collect(),
        probes: b.probes.iter().map(|p| (p[0].0, p[1].0)).collect(),
    };
    let index = build_index_profile(&s.geometry, &grid)?;
    let res = bpm_propagate(&run, &index)?;

    write_columns(&out.join("power.csv"), &["z", "power"], &[&res.z, &res.power])?;
    let traces: Vec<Vec<f64>> = (0..run.probes.len()).map(|k| res.probe_intensity(k)).collect();
    let names: Vec<String> = (0..traces.len()).map(|k| format!("I_{k}")).collect();
    let mut headers = vec!["z"];
    headers.extend(names.iter().map(String::as_str));
    let mut cols: Vec<&[f64]> = vec![&res.z];
    cols.extend(traces.iter().map(Vec::as_slice));
    write_columns(&out.join("probes.csv"), &headers, &cols)?;
    if !res.snapshots.is_empty() {
        fs::create_dir_all(out.join("snapshots"))?;
    }
    for (k, (_, f)) in res.snapshots.iter().enumerate() {
        write_snapshot(&out.join("snapshots").join(format!("snapshot_{k}.csv")), f)?;
    }

    let p0 = res.power[0];
    let ratio = res.power.last().copied().unwrap_or(p0) / p0;
    let max_dev = res.power.iter().map(|p| (p / p0 - 1.0).abs()).fold(0.0, f64::max);
    let mut results = json!({
        "reference_index": n_ref,
        "launch_power": integrated(&launch),
        "power_ratio": ratio,
        "max_power_deviation": max_dev,
        "snapshot_correlation": res.snapshots.iter().map(|(z, f)| json!({"z": z, "correlation": intensity_correlation(&launch, f)})).collect::<Vec<_>>(),
    });
    o.summary.push(format!("power after {:.2} um: {:.5} of launch (max deviation {:.2e})", b.z_extent.0 * 1e6, ratio, max_dev));
    let mut betas: Vec<f64> = lit.iter().map(|e| e.mode.beta).collect();
    betas.dedup();
    match betas.as_slice() {
        [b0, b1] if !traces.is_empty() => {
            let analytic = beat_period(*b0, *b1)?;
            match oscillation_period(&res.z, &traces[0]) {
                Ok(fit) => {
                    o.summary.push(format!("beat period: BPM {:.4} um, analytic {:.4} um", fit * 1e6, analytic * 1e6));
                    results["beat_period"] = json!({ "fit": fit, "analytic": analytic, "relative_error": (fit - analytic).abs() / analytic });
                }
                Err(e) => o.warnings.push(format!("beat period fit failed: {e}")),
            }
        }
        [b0] if !res.probe_fields.is_empty() => {
            let slope = phase_slope(&res.z, &res.probe_fields[0])?;
            o.summary.push(format!("phase slope {:.6e} 1/m vs beta {:.6e} 1/m", slope, b0));
            results["phase_slope"] = json!({ "fit": slope, "beta": b0, "relative_error": (slope - b0).abs() / b0 });
        }
        _ => {}
    }
    o.results = results;
    Ok(o)
}

fn integrated(f: &evatrap_core::grid::FieldMap<num_complex::Complex64>) -> f64 {
    evatrap_core::field::integrated_power(f)
}

#[derive(Serialize)]
struct PhaseRow {
    index_shift: f64,
    theta: f64,
    theta_over_pi: f64,
    confinement: f64,
    unitarity_defect: f64,
    p_te00: f64,
    p_te10: f64,
}

#[derive(Serialize)]
struct ChainRow {
    stage: Stage,
    te00: [f64; 2],
    te10: [f64; 2],
    te01: [f64; 2],
    populations: [f64; 3],
}

fn mzi(s: &Session, out: &Path) -> Result<Outcome> {
    let c = &s.config;
    let m = &c.mzi;
    let mut o = Outcome::default();
    let grid = match m.grid_step {
        Some(step) => s.grid_with_step(step.0)?,
        None => s.grid,
    };
    let phases = m
        .index_shifts
        .iter()
        .map(|&dn| {
            let e = modulator_phase(&c.mzi_device(dn), &s.geometry, &grid, m.phase_model)?;
            let (p0, p1) = evatrap_core::control::mzi_apply(e.theta, ModeVector::fundamental()).populations();
            Ok(PhaseRow {
                index_shift: dn,
                theta: e.theta,
                theta_over_pi: e.theta / std::f64::consts::PI,
                confinement: e.confinement,
                unitarity_defect: unitarity_defect(&mzi_matrix(e.theta)),
                p_te00: p0,
                p_te10: p1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for p in &phases {
        o.summary.push(format!("dn = {:.5}: theta = {:.4} pi, |U^H U - I| = {:.1e}", p.index_shift, p.theta_over_pi, p.unitarity_defect));
    }
    write_rows(&out.join("mzi_phase.csv"), &phases)?;

    let mut curve_max_defect = None;
    if m.curve_points > 0 {
        let shifts = linspace(0.0, m.curve_max_shift, m.curve_points);
        let curve = superposition_vs_dn(&c.mzi_device(0.0), &s.geometry, &grid, m.phase_model, &shifts)?;
        curve_max_defect = Some(curve.iter().map(|r| (r.p0 + r.p1 - 1.0).abs()).fold(0.0, f64::max));
        write_rows(&out.join("mzi_curve.csv"), &curve)?;
    }

    let dev = c.coupler_device();
    let zs = linspace(0.0, 2.0 * dev.coupling_length, c.coupler.points);
    let te10 = ModeVector::new(num_complex::Complex64::new(1.0, 0.0), num_complex::Complex64::new(0.0, 0.0));
    let pops = zs.iter().map(|&z| coupler_apply(&dev, z, te10).map(|v| v.populations())).collect::<Result<Vec<_>>>()?;
    let (a, b): (Vec<f64>, Vec<f64>) = pops.into_iter().unzip();
    write_columns(&out.join("coupler_curve.csv"), &["z", "p_te10", "p_te01"], &[&zs, &a, &b])?;
    let at = |z: f64| coupler_apply(&dev, z, te10).map(|v| v.populations().1);
    let (full, half) = (at(dev.coupling_length)?, at(0.5 * dev.coupling_length)?);
    o.summary.push(format!("coupler: TE01 share {:.6} at L_c, {:.6} at L_c/2", full, half));

    let stages = c.chain_stages();
    let states = run_chain(&stages, ChainState::launch())?;
    let chain: Vec<ChainRow> = stages
        .iter()
        .zip(&states)
        .map(|(st, x)| ChainRow {
            stage: st.clone(),
            te00: [x.te00.re, x.te00.im],
            te10: [x.te10.re, x.te10.im],
            te01: [x.te01.re, x.te01.im],
            populations: [x.te00.norm_sqr(), x.te10.norm_sqr(), x.te01.norm_sqr()],
        })
        .collect();
    write_json(&out.join("chain.json"), &chain)?;

    let supermode = if c.coupler.supermode {
        let e = supermode_coupling(&s.geometry, dev.gap, c.red.wavelength.0, c.coupler.supermode_step.0, c.coupler.supermode_extent.0)?;
        o.summary.push(format!(
            "supermode kappa {:.3e} 1/m (L_c {:.2} um) vs CMT kappa {:.3e} 1/m",
            e.kappa,
            e.coupling_length * 1e6,
            dev.kappa()
        ));
        Some(e)
    } else {
        None
    };
    o.results = json!({
        "phases": phases,
        "curve_max_population_defect": curve_max_defect,
        "coupler": { "kappa": dev.kappa(), "transfer_at_lc": full, "transfer_at_half_lc": half },
        "chain": chain,
        "supermode": supermode,
    });
    Ok(o)
}
