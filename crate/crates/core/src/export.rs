//! CSV and JSON writers for mode fields, potentials, propagation snapshots
//! and tables. Energies in potential dumps are in μK, lengths in m.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::field::INTENSITY_FACTOR;
use crate::grid::FieldMap;
use crate::modes::{GuidedMode, ModeLabel};
use crate::physics::joules_to_microkelvin;
use crate::trap::{PotentialMap, SweepRow};
use crate::{Error, Result};

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.9e}")
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Metadata written next to a mode's field dump.
#[derive(Debug, Clone, Serialize)]
pub struct ModeHeader {
    pub label: ModeLabel,
    pub beta: f64,
    pub effective_index: f64,
    pub wavelength: f64,
    /// W carried at unit amplitude.
    pub power: f64,
    pub residual: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl From<&GuidedMode> for ModeHeader {
    fn from(m: &GuidedMode) -> Self {
        let g = m.field.grid;
        Self {
            label: m.label,
            beta: m.beta,
            effective_index: m.effective_index(),
            wavelength: m.wavelength,
            power: m.power,
            residual: m.residual,
            nx: g.nx,
            ny: g.ny,
            dx: g.dx,
            dy: g.dy,
        }
    }
}

/// `x,y,E` rows plus `<stem>.json` with the [`ModeHeader`].
pub fn write_mode(dir: &Path, stem: &str, mode: &GuidedMode) -> Result<()> {
    let mut w = csv_writer(&dir.join(format!("{stem}.csv")))?;
    w.write_record(["x", "y", "E"]).map_err(csv_err)?;
    let g = mode.field.grid;
    for j in 0..g.ny {
        for i in 0..g.nx {
            w.write_record([fmt(g.x(i)), fmt(g.y(j)), fmt(mode.field.get(i, j))]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    write_json(&dir.join(format!("{stem}.json")), &ModeHeader::from(mode))
}

/// `x,y[,z],U_total,U_red,U_blue,U_sur` in μK for every unmasked cell.
pub fn write_potential(path: &Path, map: &PotentialMap) -> Result<()> {
    let mut w = csv_writer(path)?;
    let three_d = map.nz() > 1;
    let mut head = vec!["x", "y"];
    if three_d {
        head.push("z");
    }
    head.extend(["U_total", "U_red", "U_blue", "U_sur"]);
    w.write_record(&head).map_err(csv_err)?;
    let plane = map.grid.len();
    for n in 0..map.total.len() {
        if map.is_masked(n) {
            continue;
        }
        let (i, j, k) = map.coords(n);
        let t = n % plane;
        let mut rec = vec![fmt(map.grid.x(i)), fmt(map.grid.y(j))];
        if three_d {
            rec.push(fmt(map.z[k]));
        }
        for v in [map.total[n], map.red[n], map.blue[t], map.surface[t]] {
            rec.push(fmt(joules_to_microkelvin(v)));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `x,y,re,im,I` for one propagation snapshot.
pub fn write_snapshot(path: &Path, field: &FieldMap<Complex64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y", "re", "im", "I"]).map_err(csv_err)?;
    let g = field.grid;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let v = field.get(i, j);
            let rec = [fmt(g.x(i)), fmt(g.y(j)), fmt(v.re), fmt(v.im), fmt(INTENSITY_FACTOR * v.norm_sqr())];
            w.write_record(rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Equal-length columns under the given headers.
pub fn write_columns(path: &Path, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if headers.len() != columns.len() || columns.windows(2).any(|c| c[0].len() != c[1].len()) {
        return Err(Error::Config("column count or lengths do not match".into()));
    }
    let mut w = csv_writer(path)?;
    w.write_record(headers).map_err(csv_err)?;
    for r in 0..columns.first().map_or(0, |c| c.len()) {
        w.write_record(columns.iter().map(|c| fmt(c[r]))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializable rows as CSV, one column per field.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text in the column order P_red, y_min, U_D, Γ_sc, τ_trap.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "P_red(mW)", "y_min(um)", "U_D(uK)", "G_sc(1/s)", "tau(s)"
    );
    for r in rows {
        match &r.report {
            Some(t) => s.push_str(&format!(
                "{:>10.2} {:>10.4} {:>10.2} {:>10.3} {:>10.2}\n",
                r.red_power * 1e3,
                t.standoff * 1e6,
                t.depth_uk,
                t.gamma,
                t.lifetime
            )),
            None => s.push_str(&format!(
                "{:>10.2} {:>10} {:>10} {:>10} {:>10}  {}\n",
                r.red_power * 1e3,
                "-",
                "-",
                "-",
                "-",
                r.error.as_deref().unwrap_or("")
            )),
        }
    }
    s
}
