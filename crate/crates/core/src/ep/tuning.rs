//! Conduction-velocity calibration on a 1D strip.

use super::grid::TissueGrid;
use super::ionic::IonicParams;
use super::reentry::ActivationTracker;
use super::solver::{Simulation, Stimulus, StimulusSchedule};
use crate::error::{Error, Result};

/// Strip used for CV measurement: 200 nodes, probes at nodes 50 and 150.
const STRIP_NODES: usize = 200;
const PROBE_A: usize = 50;
const PROBE_B: usize = 150;
const STRIP_STIM_AMPLITUDE: f64 = 2000.0;
const STRIP_STIM_MS: f64 = 2.0;
/// A wave slower than 0.01 mm/ms would take longer than this to cross.
const STRIP_TIMEOUT_MS: f64 = 5000.0;

/// Relative tolerance at which bisection is declared converged.
pub const TUNING_TOLERANCE: f64 = 0.02;

/// Measures the planar conduction velocity (mm/ms) for a healthy-tissue
/// diffusion coefficient on a strip with spacing `dx_mm`, starting from the
/// paced limit-cycle state. Errors if the wave never reaches the far probe.
pub fn measure_cv(diffusivity: f64, dx_mm: f64, ionic: &IonicParams, dt_ms: f64) -> Result<f64> {
    let grid = TissueGrid::sheet(STRIP_NODES, 1, dx_mm, diffusivity);
    let mut sim = Simulation::new(grid, *ionic, dt_ms)?;
    let mut state = sim.limit_cycle_state();
    let mut sched = StimulusSchedule::new();
    sched.push(Stimulus::at_nodes(vec![0, 1, 2], 0.0, STRIP_STIM_MS, STRIP_STIM_AMPLITUDE));
    let mut a = ActivationTracker::new(PROBE_A, 0.5, &state);
    let mut b = ActivationTracker::new(PROBE_B, 0.5, &state);
    while state.t_ms() < STRIP_TIMEOUT_MS {
        sim.step(&mut state, &sched);
        a.observe(&state);
        if b.observe(&state) {
            break;
        }
    }
    match (a.times_ms.first(), b.times_ms.first()) {
        (Some(&ta), Some(&tb)) if tb > ta => Ok((PROBE_B - PROBE_A) as f64 * dx_mm / (tb - ta)),
        _ => Err(Error::NoPropagation),
    }
}

/// Result of conductivity tuning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunedConductivity {
    /// Healthy-tissue diffusion coefficient (mm²/ms).
    pub diffusivity: f64,
    pub measured_cv: f64,
    pub iterations: usize,
}

/// Bisects (in log space) the diffusion coefficient until the strip CV is
/// within 2% of `target_cv` (mm/ms); iteration continues a few rounds past
/// that to tighten the result. The upper end of the bracket is the largest
/// coefficient the time step can integrate stably.
pub fn tune_conductivity(
    target_cv: f64,
    dx_mm: f64,
    ionic: &IonicParams,
    dt_ms: f64,
) -> Result<TunedConductivity> {
    if !(target_cv.is_finite() && target_cv > 0.0) {
        return Err(Error::Config("target CV must be positive".into()));
    }
    let mut hi = 0.99 * dx_mm * dx_mm / (4.0 * dt_ms);
    let mut lo = hi * 1e-3;
    let cv_hi = measure_cv(hi, dx_mm, ionic, dt_ms)?;
    let cv_lo = measure_cv(lo, dx_mm, ionic, dt_ms).unwrap_or(0.0);
    if target_cv > cv_hi || target_cv < cv_lo {
        return Err(Error::TuningUnreachable { target: target_cv, lo: cv_lo, hi: cv_hi });
    }
    let mut best = TunedConductivity { diffusivity: hi, measured_cv: cv_hi, iterations: 0 };
    for it in 1..=40 {
        let mid = (lo * hi).sqrt();
        let cv = measure_cv(mid, dx_mm, ionic, dt_ms).unwrap_or(0.0);
        if (cv - target_cv).abs() < (best.measured_cv - target_cv).abs() {
            best = TunedConductivity { diffusivity: mid, measured_cv: cv, iterations: it };
        }
        if (cv - target_cv).abs() <= 0.001 * target_cv {
            break;
        }
        if cv < target_cv {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.measured_cv - target_cv).abs() > TUNING_TOLERANCE * target_cv {
        return Err(Error::TuningUnreachable { target: target_cv, lo: cv_lo, hi: cv_hi });
    }
    Ok(best)
}
