//! Numerical engine for a two-color evanescent-field atom guide and 1D
//! optical lattice above a dual-mode channel waveguide.
//!
//! Modules, bottom-up:
//!
//! * [`physics`]: constants, atom data and per-atom formulas.
//! * [`geometry`], [`grid`]: the waveguide cross-section and the uniform
//!   transverse grid with sampled field maps.
//! * [`sparse`], [`eigen`]: CSR storage and the shift-invert eigen-solvers.
//! * [`modes`]: finite-difference transverse eigenmodes and evanescent decay
//!   lengths.
//! * [`field`], [`bpm`]: modal superpositions, intensities and a wide-angle
//!   finite-difference beam propagator.
//! * [`control`]: Mach-Zehnder and directional-coupler mode transformations.
//! * [`trap`]: dipole and surface potentials, trap minima, figures of merit.
//! * [`transition`]: MZI phase sweeps between the guide and the lattice.
//! * [`export`]: CSV/JSON writers shared by the command line front-end.

pub mod bpm;
pub mod control;
pub mod eigen;
pub mod export;
mod error;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod modes;
pub mod physics;
pub mod sparse;
pub mod trap;
pub mod transition;

pub use error::{Error, Result};
