//! Uniform cell-centred transverse grids and fields sampled on them.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform rectangular grid of `nx × ny` cells. Samples live at cell centres
/// `x_i = x_min + (i + ½)·dx`, `y_j = y_min + (j + ½)·dy`; storage is row-major
/// with `x` varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Left edge of the domain, m.
    pub x_min: f64,
    /// Bottom edge of the domain, m.
    pub y_min: f64,
}

impl SimulationGrid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, x_min: f64, y_min: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::Config(format!("grid needs at least 3×3 cells, got {nx}×{ny}")));
        }
        if !(dx > 0.0 && dy > 0.0) || !dx.is_finite() || !dy.is_finite() {
            return Err(Error::Config(format!("grid steps must be positive, got dx={dx}, dy={dy}")));
        }
        Ok(Self { nx, ny, dx, dy, x_min, y_min })
    }

    /// Square-celled grid of physical size `width × height`, centred in `x`,
    /// whose top edge sits `margin_above` above `y = 0`.
    pub fn centered(step: f64, width: f64, height: f64, margin_above: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        let nx = (width / step).round() as usize;
        let ny = (height / step).round() as usize;
        Self::new(nx, ny, step, step, -0.5 * nx as f64 * step, margin_above - ny as f64 * step)
    }

    /// Same physical extent with each step halved.
    pub fn refined(&self) -> Self {
        Self { nx: 2 * self.nx, ny: 2 * self.ny, dx: 0.5 * self.dx, dy: 0.5 * self.dy, ..*self }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.dy
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.nx as f64 * self.dx
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.ny as f64 * self.dy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max() && y >= self.y_min && y <= self.y_max()
    }

    /// Column whose centre is nearest to `x` (clamped to the grid).
    pub fn nearest_column(&self, x: f64) -> usize {
        let f = ((x - self.x_min) / self.dx - 0.5).round();
        f.clamp(0.0, (self.nx - 1) as f64) as usize
    }

    pub fn nearest_row(&self, y: f64) -> usize {
        let f = ((y - self.y_min) / self.dy - 0.5).round();
        f.clamp(0.0, (self.ny - 1) as f64) as usize
    }

    /// Fractional cell coordinates of a point, measured from the first centre.
    fn fractional(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_min) / self.dx - 0.5, (y - self.y_min) / self.dy - 0.5)
    }
}

/// Scalar (real or complex) values sampled on a [`SimulationGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap<T> {
    pub grid: SimulationGrid,
    pub values: Vec<T>,
}

impl<T> FieldMap<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    pub fn zeros(grid: SimulationGrid) -> Self {
        Self { grid, values: vec![T::default(); grid.len()] }
    }

    pub fn from_fn(grid: SimulationGrid, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: SimulationGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} samples but grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[self.grid.index(i, j)]
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> FieldMap<U> {
        FieldMap { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Riemann sum `Σ f(v)·dx·dy` over all cells.
    pub fn integrate(&self, f: impl Fn(T) -> f64) -> f64 {
        self.values.iter().map(|&v| f(v)).sum::<f64>() * self.grid.cell_area()
    }

    fn check_inside(&self, x: f64, y: f64) -> Result<()> {
        if self.grid.contains(x, y) {
            Ok(())
        } else {
            Err(Error::Domain(format!("point ({x:.4e}, {y:.4e}) m lies outside the grid")))
        }
    }

    /// Bilinear interpolation between cell centres; points between the outer
    /// centres and the domain edge take the nearest edge value.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Result<T> {
        self.check_inside(x, y)?;
        let g = &self.grid;
        let (fx, fy) = g.fractional(x, y);
        let fx = fx.clamp(0.0, (g.nx - 1) as f64);
        let fy = fy.clamp(0.0, (g.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx - 2);
        let j0 = (fy.floor() as usize).min(g.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let a = self.get(i0, j0) * (1.0 - tx) + self.get(i0 + 1, j0) * tx;
        let b = self.get(i0, j0 + 1) * (1.0 - tx) + self.get(i0 + 1, j0 + 1) * tx;
        Ok(a * (1.0 - ty) + b * ty)
    }

    /// Catmull-Rom bicubic interpolation (C¹, exact for quadratics).
    pub fn sample_bicubic(&self, x: f64, y: f64) -> Result<T> {
        self.check_inside(x, y)?;
        let g = &self.grid;
        let (fx, fy) = g.fractional(x, y);
        let fx = fx.clamp(0.0, (g.nx - 1) as f64);
        let fy = fy.clamp(0.0, (g.ny - 1) as f64);
        let i1 = (fx.floor() as usize).min(g.nx - 2);
        let j1 = (fy.floor() as usize).min(g.ny - 2);
        let wx = catmull_rom_weights(fx - i1 as f64);
        let wy = catmull_rom_weights(fy - j1 as f64);
        let clamp_i = |k: isize| k.clamp(0, g.nx as isize - 1) as usize;
        let clamp_j = |k: isize| k.clamp(0, g.ny as isize - 1) as usize;
        let mut acc = T::default();
        for (b, &wyb) in wy.iter().enumerate() {
            let j = clamp_j(j1 as isize + b as isize - 1);
            let mut row = T::default();
            for (a, &wxa) in wx.iter().enumerate() {
                let i = clamp_i(i1 as isize + a as isize - 1);
                row = row + self.get(i, j) * wxa;
            }
            acc = acc + row * wyb;
        }
        Ok(acc)
    }
}

fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn grid() -> SimulationGrid {
        SimulationGrid::new(20, 16, 0.1, 0.2, -1.0, -2.0).unwrap()
    }

    #[test]
    fn centred_grid_is_symmetric_in_x() {
        let g = SimulationGrid::centered(5e-9, 3e-6, 3e-6, 1.35e-6).unwrap();
        assert_eq!((g.nx, g.ny), (600, 600));
        assert_relative_eq!(g.x(0), -g.x(g.nx - 1), epsilon = 1e-18);
        assert_relative_eq!(g.y_max(), 1.35e-6, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(SimulationGrid::new(10, 10, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(SimulationGrid::new(2, 10, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn bilinear_reproduces_linear_fields() {
        let g = grid();
        let f = FieldMap::from_fn(g, |x, y| 2.0 * x - 3.0 * y + 1.0);
        for &(x, y) in &[(0.03, 0.1), (-0.7, -1.3), (0.42, 0.77)] {
            assert_relative_eq!(f.sample_bilinear(x, y).unwrap(), 2.0 * x - 3.0 * y + 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bicubic_reproduces_quadratics() {
        let g = grid();
        let q = |x: f64, y: f64| x * x - 0.5 * x * y + 2.0 * y * y - x;
        let f = FieldMap::from_fn(g, q);
        for &(x, y) in &[(0.03, 0.1), (-0.33, -0.71), (0.42, 0.77)] {
            assert_relative_eq!(f.sample_bicubic(x, y).unwrap(), q(x, y), epsilon = 1e-12);
        }
    }

    #[test]
    fn outside_queries_are_domain_errors() {
        let f = FieldMap::<f64>::zeros(grid());
        assert!(matches!(f.sample_bilinear(5.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(f.sample_bicubic(0.0, -9.0), Err(Error::Domain(_))));
    }

    #[test]
    fn complex_fields_interpolate() {
        let g = grid();
        let f = FieldMap::from_fn(g, |x, y| Complex64::new(x, y));
        let v = f.sample_bilinear(0.05, 0.3).unwrap();
        assert_relative_eq!(v.re, 0.05, epsilon = 1e-12);
        assert_relative_eq!(v.im, 0.3, epsilon = 1e-12);
    }
}
