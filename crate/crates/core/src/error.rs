use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("wavelength {wavelength:.6e} m is resonant with the {line} line")]
    Resonance { wavelength: f64, line: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("eigen-solver did not converge after {iterations} restarts (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("decay-length fit failed: {0}")]
    Fit(String),

    #[error("cannot compose fields: {0}")]
    Composition(String),

    #[error("mode {0} is not guided")]
    ModeCutoff(String),

    #[error("propagation became unstable at z = {z:.4e} m (power ratio {growth:.6})")]
    Unstable { z: f64, growth: f64 },

    #[error("no trap minimum: {0}")]
    NoTrapMinimum(String),

    #[error("invalid trap: {0}")]
    InvalidTrap(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
