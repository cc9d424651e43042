//! Sweeping the MZI phase to morph the red field between the guide and the
//! lattice configuration.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{run_chain, standard_chain, ChainState, CouplerDevice};
use crate::error::{Error, Result};
use crate::field::{ModalField, ModeExcitation};
use crate::modes::GuidedMode;
use crate::physics::joules_to_microkelvin;
use crate::trap::{analyze_lattice, Landscape, LatticeOptions, LatticeReport};

/// Mode populations below this fraction are dropped from the red field.
const EMPTY_POPULATION: f64 = 1e-12;

/// Red field carrying the chain output: `te00` and `te01` amplitudes scaled to
/// `total_power`. The TE10 arm is not part of the trap and is ignored.
pub fn red_from_chain(
    state: &ChainState,
    total_power: f64,
    te00: &Arc<GuidedMode>,
    te01: &Arc<GuidedMode>,
) -> Result<ModalField> {
    let norm = state.te00.norm_sqr() + state.te01.norm_sqr();
    if !(norm > 0.0) {
        return Err(Error::Config("chain output has no TE00 or TE01 content".into()));
    }
    let mut parts = Vec::with_capacity(2);
    for (c, mode) in [(state.te00, te00), (state.te01, te01)] {
        let frac = c.norm_sqr() / norm;
        if frac > EMPTY_POPULATION {
            parts.push(ModeExcitation::new(mode.clone(), frac * total_power, c.arg())?);
        }
    }
    ModalField::new(parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPoint {
    pub theta: f64,
    /// |C₀|², |C₁|² of the red light.
    pub populations: [f64; 2],
    /// max − min of U along one beat period at the probe point, μK.
    pub probe_corrugation_uk: f64,
    pub lattice: Option<LatticeReport>,
    pub error: Option<String>,
}

/// Runs TE00 → MZI(θ) → coupler for each θ, loads the result as the red
/// field of `base` and analyses the lattice. Corrugation is measured at the
/// fixed point `probe = (x, y)`.
#[allow(clippy::too_many_arguments)]
pub fn guide_lattice_transition(
    base: &Landscape,
    te00: &Arc<GuidedMode>,
    te01: &Arc<GuidedMode>,
    coupler: &CouplerDevice,
    thetas: &[f64],
    total_power: f64,
    probe: (f64, f64),
    opts: &LatticeOptions,
) -> Result<Vec<TransitionPoint>> {
    coupler.validate()?;
    let beat = crate::field::beat_period(te00.beta, te01.beta)?;
    thetas
        .par_iter()
        .map(|&theta| {
            let out = *run_chain(&standard_chain(theta, coupler), ChainState::launch())?
                .last()
                .expect("chain has stages");
            let red = red_from_chain(&out, total_power, te00, te01)?;
            let norm = out.te00.norm_sqr() + out.te01.norm_sqr();
            let landscape = base.with_red(red)?;
            let n = 4 * opts.stations_per_period.max(8);
            let along: Vec<f64> = (0..n)
                .map(|k| landscape.potential_at(probe.0, probe.1, k as f64 * beat / n as f64))
                .collect::<Result<_>>()?;
            let hi = along.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = along.iter().copied().fold(f64::INFINITY, f64::min);
            let (lattice, error) = match analyze_lattice(&landscape, opts) {
                Ok((r, _)) => (Some(r), None),
                Err(e @ (Error::NoTrapMinimum(_) | Error::InvalidTrap(_))) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            Ok(TransitionPoint {
                theta,
                populations: [out.te00.norm_sqr() / norm, out.te01.norm_sqr() / norm],
                probe_corrugation_uk: joules_to_microkelvin(hi - lo),
                lattice,
                error,
            })
        })
        .collect()
}
