//! Channel-waveguide cross-sections as piecewise-constant index profiles.
//!
//! Coordinates: `x` lateral, `y` vertical (normal to the chip), `z` along the
//! guide. The core of a [`WaveguideGeometry`] is centred at `x = 0` with its
//! top face at `y = 0`; it rests on a substrate step (pedestal) of the same
//! width, below which the substrate fills the full width.

use serde::{Deserialize, Serialize};

use crate::grid::{FieldMap, SimulationGrid};
use crate::{Error, Result};

/// Axis-aligned rectangle; bounds may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    /// Euclidean distance from a point to the rectangle (zero inside).
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x0 - x).max(0.0).max(x - self.x1);
        let dy = (self.y0 - y).max(0.0).max(y - self.y1);
        dx.hypot(dy)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub rect: Rect,
    pub index: f64,
}

/// Background medium plus rectangular inclusions; later regions win where
/// they overlap earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub background: f64,
    pub regions: Vec<Region>,
}

impl Structure {
    pub fn index_at(&self, x: f64, y: f64) -> f64 {
        self.regions
            .iter()
            .rev()
            .find(|r| r.rect.contains(x, y))
            .map_or(self.background, |r| r.index)
    }

    pub fn is_dielectric(&self, x: f64, y: f64) -> bool {
        self.index_at(x, y) != self.background
    }

    /// Distance from `(x, y)` to the nearest non-background region.
    pub fn distance_to_dielectric(&self, x: f64, y: f64) -> f64 {
        self.regions
            .iter()
            .filter(|r| r.index != self.background)
            .map(|r| r.rect.distance(x, y))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_index(&self) -> f64 {
        self.regions.iter().map(|r| r.index).fold(self.background, f64::max)
    }

    /// Samples the profile at every cell centre.
    pub fn rasterize(&self, grid: &SimulationGrid) -> FieldMap<f64> {
        FieldMap::from_fn(*grid, |x, y| self.index_at(x, y))
    }
}

/// Rectangular rib on a substrate step, surrounded by a homogeneous cladding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideGeometry {
    pub core_width: f64,
    pub core_height: f64,
    pub core_index: f64,
    pub substrate_index: f64,
    pub clad_index: f64,
    pub substrate_step_height: f64,
}

impl WaveguideGeometry {
    /// 300 nm × 300 nm silicon rib on silica with a 1 μm step, in vacuum.
    pub fn soi_default() -> Self {
        Self {
            core_width: 300e-9,
            core_height: 300e-9,
            core_index: 3.42,
            substrate_index: 1.45,
            clad_index: 1.0,
            substrate_step_height: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.core_width > 0.0 && self.core_height > 0.0) {
            return Err(Error::Config(format!(
                "core must have positive size, got {} × {} m",
                self.core_width, self.core_height
            )));
        }
        if self.substrate_step_height < 0.0 {
            return Err(Error::Config("substrate step height must be non-negative".into()));
        }
        if self.clad_index < 1.0 || self.substrate_index < 1.0 || self.core_index < 1.0 {
            return Err(Error::Config("refractive indices must be at least 1".into()));
        }
        Ok(())
    }

    /// True when the index ordering `n_core > n_substrate ≥ n_clad` allows
    /// guided modes.
    pub fn can_guide(&self) -> bool {
        self.core_index > self.substrate_index && self.substrate_index >= self.clad_index
    }

    pub fn core_rect(&self) -> Rect {
        let hw = 0.5 * self.core_width;
        Rect::new(-hw, hw, -self.core_height, 0.0)
    }

    /// Height of the core's top face (always zero).
    pub fn core_top(&self) -> f64 {
        0.0
    }

    pub fn structure(&self) -> Structure {
        let hw = 0.5 * self.core_width;
        let step_bottom = -self.core_height - self.substrate_step_height;
        let mut regions = vec![Region {
            rect: Rect::new(f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, step_bottom),
            index: self.substrate_index,
        }];
        if self.substrate_step_height > 0.0 {
            regions.push(Region {
                rect: Rect::new(-hw, hw, step_bottom, -self.core_height),
                index: self.substrate_index,
            });
        }
        regions.push(Region { rect: self.core_rect(), index: self.core_index });
        Structure { background: self.clad_index, regions }
    }

    /// Same cross-section with the core index shifted by `delta`.
    pub fn with_core_index_shift(&self, delta: f64) -> Self {
        Self { core_index: self.core_index + delta, ..self.clone() }
    }
}

/// Samples `n(x, y)` of the waveguide on the grid.
pub fn build_index_profile(geometry: &WaveguideGeometry, grid: &SimulationGrid) -> Result<FieldMap<f64>> {
    geometry.validate()?;
    let core = geometry.core_rect();
    if core.x0 < grid.x_min || core.x1 > grid.x_max() || core.y0 < grid.y_min || core.y1 > grid.y_max() {
        return Err(Error::Config("grid does not contain the waveguide core".into()));
    }
    Ok(geometry.structure().rasterize(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> SimulationGrid {
        SimulationGrid::centered(5e-9, 3e-6, 3e-6, 1.35e-6).unwrap()
    }

    #[test]
    fn core_and_vacuum_cells() {
        let g = default_grid();
        let n = build_index_profile(&WaveguideGeometry::soi_default(), &g).unwrap();
        let centre = n.get(g.nearest_column(0.0), g.nearest_row(-150e-9));
        let above = n.get(g.nearest_column(0.0), g.nearest_row(1e-6));
        let step = n.get(g.nearest_column(0.0), g.nearest_row(-0.8e-6));
        let beside_step = n.get(g.nearest_column(0.6e-6), g.nearest_row(-0.8e-6));
        let deep = n.get(g.nearest_column(1.2e-6), g.nearest_row(-1.5e-6));
        assert_eq!(centre, 3.42);
        assert_eq!(above, 1.0);
        assert_eq!(step, 1.45);
        assert_eq!(beside_step, 1.0);
        assert_eq!(deep, 1.45);
    }

    #[test]
    fn core_cell_count_matches_area() {
        let g = default_grid();
        let geo = WaveguideGeometry::soi_default();
        let n = build_index_profile(&geo, &g).unwrap();
        let count = n.values.iter().filter(|&&v| v == geo.core_index).count() as f64;
        let expected = (geo.core_width / g.dx) * (geo.core_height / g.dy);
        // One cell row/column of slack on every edge.
        let slack = 2.0 * (geo.core_width / g.dx + geo.core_height / g.dy) + 4.0;
        assert!((count - expected).abs() <= slack, "{count} vs {expected}");
    }

    #[test]
    fn degenerate_core_is_rejected() {
        let geo = WaveguideGeometry { core_width: 0.0, ..WaveguideGeometry::soi_default() };
        assert!(matches!(build_index_profile(&geo, &default_grid()), Err(Error::Config(_))));
    }

    #[test]
    fn grid_must_contain_core() {
        let small = SimulationGrid::centered(5e-9, 0.2e-6, 3e-6, 1.35e-6).unwrap();
        assert!(build_index_profile(&WaveguideGeometry::soi_default(), &small).is_err());
    }

    #[test]
    fn surface_distance_above_core_is_height() {
        let s = WaveguideGeometry::soi_default().structure();
        assert!((s.distance_to_dielectric(0.0, 90e-9) - 90e-9).abs() < 1e-18);
        assert_eq!(s.distance_to_dielectric(0.0, -10e-9), 0.0);
        // Beside the core the side wall is nearest.
        let d = s.distance_to_dielectric(0.25e-6, -0.1e-6);
        assert!((d - 0.1e-6).abs() < 1e-15);
    }
}
