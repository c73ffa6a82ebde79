//! Two-variable phenomenological membrane model.
//!
//! `vm` is the normalized transmembrane potential (0 = rest, 1 = fully
//! depolarized) and `h` the recovery gate. The inward current opens with
//! `h·vm²(1 − vm)/τ_in`, the outward current is a passive `vm/τ_out` leak,
//! and the gate relaxes toward 1 (below `v_gate`) or 0 (above it).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stimulus current amplitudes are given in model units; one unit adds
/// `STIM_SCALE` to `dvm/dt` (per ms).
pub const STIM_SCALE: f64 = 1.0e-3;

/// Below this magnitude `vm` is flushed to zero so that quiescent tissue
/// does not decay into subnormal floats.
const VM_FLUSH: f64 = 1.0e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IonicParams {
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_open: f64,
    pub tau_close: f64,
    pub v_gate: f64,
    pub vm_rest_mv: f64,
    pub vm_amp_mv: f64,
}

impl Default for IonicParams {
    fn default() -> Self {
        Self {
            tau_in: 0.3,
            tau_out: 6.0,
            tau_open: 120.0,
            tau_close: 150.0,
            v_gate: 0.13,
            vm_rest_mv: -80.0,
            vm_amp_mv: 100.0,
        }
    }
}

impl IonicParams {
    pub fn validate(&self) -> Result<()> {
        let taus = [self.tau_in, self.tau_out, self.tau_open, self.tau_close];
        if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config("ionic time constants must be positive".into()));
        }
        if !(self.v_gate > 0.0 && self.v_gate < 1.0) {
            return Err(Error::Config("v_gate must lie in (0, 1)".into()));
        }
        if !(self.vm_amp_mv.is_finite() && self.vm_rest_mv.is_finite()) {
            return Err(Error::Config("physical vm mapping must be finite".into()));
        }
        Ok(())
    }

    /// Maps normalized potential to mV.
    #[inline]
    pub fn to_mv(&self, vm: f64) -> f64 {
        self.vm_rest_mv + self.vm_amp_mv * vm
    }

    /// Time derivatives `(dvm/dt, dh/dt)` of the membrane model, without
    /// stimulus or diffusion.
    #[inline]
    pub fn rates(&self, vm: f64, h: f64) -> (f64, f64) {
        Rates::from(self).eval(vm, h)
    }
}

/// Membrane rates with the time constants pre-inverted; shared by the
/// single-cell path and the tissue kernel so both round identically.
#[derive(Clone, Copy, Debug)]
pub struct Rates {
    inv_in: f64,
    inv_out: f64,
    inv_open: f64,
    inv_close: f64,
    v_gate: f64,
}

impl From<&IonicParams> for Rates {
    fn from(p: &IonicParams) -> Self {
        Self {
            inv_in: 1.0 / p.tau_in,
            inv_out: 1.0 / p.tau_out,
            inv_open: 1.0 / p.tau_open,
            inv_close: 1.0 / p.tau_close,
            v_gate: p.v_gate,
        }
    }
}

impl Rates {
    #[inline(always)]
    pub fn eval(&self, vm: f64, h: f64) -> (f64, f64) {
        let dvm = h * vm * vm * (1.0 - vm) * self.inv_in - vm * self.inv_out;
        let dh = if vm < self.v_gate {
            (1.0 - h) * self.inv_open
        } else {
            -h * self.inv_close
        };
        (dvm, dh)
    }

    /// One forward-Euler step.
    #[inline(always)]
    pub fn step(&self, vm: f64, h: f64, dt_ms: f64) -> (f64, f64) {
        let (dvm, dh) = self.eval(vm, h);
        let mut vm_next = vm + dt_ms * dvm;
        if vm_next.abs() < VM_FLUSH {
            vm_next = 0.0;
        }
        (vm_next, h + dt_ms * dh)
    }
}

/// One forward-Euler step of the membrane model. Requires `dt_ms ≤ 0.1`.
#[inline]
pub fn ionic_step(vm: f64, h: f64, p: &IonicParams, dt_ms: f64) -> (f64, f64) {
    Rates::from(p).step(vm, h, dt_ms)
}

/// Single-cell integrator used for limit-cycle initialization and APD
/// measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub vm: f64,
    pub h: f64,
}

impl Cell {
    pub const REST: Cell = Cell { vm: 0.0, h: 1.0 };

    /// Advances `n_steps` steps with a constant stimulus current (model units).
    pub fn advance(&mut self, p: &IonicParams, dt_ms: f64, n_steps: usize, stim: f64) {
        let rates = Rates::from(p);
        for _ in 0..n_steps {
            let (vm, h) = rates.step(self.vm, self.h, dt_ms);
            self.vm = vm + dt_ms * stim * STIM_SCALE;
            self.h = h;
        }
    }
}

/// Paces a single cell at a fixed cycle length and returns the end-diastolic
/// state after `n_cycles` cycles (just before the next stimulus would fire).
pub fn pace_cell(
    start: Cell,
    p: &IonicParams,
    dt_ms: f64,
    n_cycles: usize,
    cycle_ms: f64,
    stim_amplitude: f64,
    stim_duration_ms: f64,
) -> Cell {
    let stim_steps = (stim_duration_ms / dt_ms).round() as usize;
    let cycle_steps = (cycle_ms / dt_ms).round() as usize;
    let mut cell = start;
    for _ in 0..n_cycles {
        cell.advance(p, dt_ms, stim_steps, stim_amplitude);
        cell.advance(p, dt_ms, cycle_steps - stim_steps, 0.0);
    }
    cell
}

/// Pacing protocol for single-cell initialization: 100 cycles at 800 ms.
pub const LIMIT_CYCLE_PACES: usize = 100;
pub const LIMIT_CYCLE_CL_MS: f64 = 800.0;
pub const SINUS_AMPLITUDE: f64 = 450.0;
pub const SINUS_DURATION_MS: f64 = 4.0;

/// End-diastolic `(vm, h)` of a single cell paced to its limit cycle; used to
/// initialize every tissue node.
pub fn init_limit_cycle(p: &IonicParams, dt_ms: f64) -> (f64, f64) {
    let cell = pace_cell(
        Cell::REST,
        p,
        dt_ms,
        LIMIT_CYCLE_PACES,
        LIMIT_CYCLE_CL_MS,
        SINUS_AMPLITUDE,
        SINUS_DURATION_MS,
    );
    (cell.vm, cell.h)
}
