//! Unidirectional-block induction of scar-mediated re-entry.

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::solver::{Simulation, Stimulus, StimulusSchedule, TissueState};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InductionProtocol {
    /// Longest time the block may stay in place after S1.
    pub block_window_ms: f64,
    pub s1_site: Vec<usize>,
    pub s1_time_ms: f64,
    pub s1_amplitude: f64,
    pub s1_duration_ms: f64,
    /// Isthmus end whose conductivity is zeroed during the block.
    pub block_nodes: Vec<usize>,
    /// Node at the isthmus midpoint; the block is lifted once it depolarizes.
    pub entry_probe: usize,
    /// Cycles the circuit must complete after the block is lifted.
    pub verify_cycles: usize,
    /// Longest admissible gap between activations at the probe.
    pub max_cycle_ms: f64,
}

/// Summary of a successful induction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InductionReport {
    pub block_lifted_ms: f64,
    /// Activation times at the isthmus midpoint after the block was lifted.
    pub activations_ms: Vec<f64>,
    pub cycle_lengths_ms: Vec<f64>,
    /// First activation time (ms) per node during induction, NaN where the
    /// node never activated. Not serialized: JSON has no NaN.
    #[serde(skip)]
    pub activation_map_ms: Vec<f64>,
}

impl InductionReport {
    pub fn mean_cycle_ms(&self) -> Option<f64> {
        (!self.cycle_lengths_ms.is_empty())
            .then(|| self.cycle_lengths_ms.iter().sum::<f64>() / self.cycle_lengths_ms.len() as f64)
    }
}

/// Tracks upward crossings of `threshold` at one node, interpolated
/// between steps.
#[derive(Clone, Debug)]
pub struct ActivationTracker {
    node: usize,
    threshold: f64,
    prev: f64,
    pub times_ms: Vec<f64>,
}

impl ActivationTracker {
    pub fn new(node: usize, threshold: f64, state: &TissueState) -> Self {
        Self { node, threshold, prev: state.vm(node), times_ms: Vec::new() }
    }

    /// Call after each step.
    pub fn observe(&mut self, state: &TissueState) -> bool {
        let v = state.vm(self.node);
        let crossed = self.prev < self.threshold && v >= self.threshold;
        if crossed {
            let frac = (self.threshold - self.prev) / (v - self.prev);
            let t = state.t_ms() - state.dt_ms() * (1.0 - frac);
            self.times_ms.push(t);
        }
        self.prev = v;
        crossed
    }
}

/// First-activation map: time each node first exceeded `threshold`.
#[derive(Clone, Debug)]
struct ActivationMap {
    threshold: f64,
    times: Vec<f64>,
}

impl ActivationMap {
    fn new(n: usize, threshold: f64) -> Self {
        Self { threshold, times: vec![f64::NAN; n] }
    }

    fn observe(&mut self, state: &TissueState) {
        let t = state.t_ms();
        for (k, slot) in self.times.iter_mut().enumerate() {
            if slot.is_nan() && state.vm(k) >= self.threshold {
                *slot = t;
            }
        }
    }
}

/// Induces re-entry from `state`: blocks one isthmus end, fires S1, lifts
/// the block once the wave has entered the isthmus from the other end, then
/// requires `verify_cycles` further activations at the isthmus midpoint.
/// Returns the post-verification checkpoint. `background` stimuli (sinus
/// pacing) keep running throughout.
pub fn induce_reentry(
    sim: &mut Simulation,
    mut state: TissueState,
    protocol: &InductionProtocol,
    background: &StimulusSchedule,
) -> Result<(Checkpoint, TissueState, InductionReport)> {
    let grid = sim.grid().clone();
    let threshold = sim.ionic().v_gate;
    let original = grid.conductivity.clone();
    let mut blocked = original.clone();
    for &k in &protocol.block_nodes {
        blocked[k] = 0.0;
    }

    let mut stimuli = background.clone();
    stimuli.push(Stimulus::at_nodes(
        protocol.s1_site.clone(),
        protocol.s1_time_ms,
        protocol.s1_duration_ms,
        protocol.s1_amplitude,
    ));

    let per_ms = sim.steps_per_ms();
    let mut map = ActivationMap::new(grid.len(), threshold);
    let fail = |reason: String, map: ActivationMap| Error::InductionFailed {
        reason,
        activation_map: map.times,
        nx: grid.nx,
        ny: grid.ny,
    };

    sim.set_conductivity(blocked)?;
    let lift_deadline = protocol.s1_time_ms + protocol.block_window_ms;
    let mut entry = ActivationTracker::new(protocol.entry_probe, threshold, &state);
    let mut lifted_at = None;
    while state.t_ms() < lift_deadline {
        for _ in 0..per_ms {
            sim.step(&mut state, &stimuli);
            if state.t_ms() > protocol.s1_time_ms && entry.observe(&state) {
                lifted_at = Some(state.t_ms());
                break;
            }
        }
        map.observe(&state);
        if lifted_at.is_some() {
            break;
        }
    }
    sim.set_conductivity(original)?;
    let Some(lifted_ms) = lifted_at else {
        return Err(fail(
            format!("wavefront never reached the isthmus midpoint within {} ms", protocol.block_window_ms),
            map,
        ));
    };
    if !state.is_finite() {
        return Err(Error::Unstable { t_ms: state.t_ms() });
    }

    let mut probe = ActivationTracker::new(protocol.entry_probe, threshold, &state);
    let mut last = lifted_ms;
    loop {
        for _ in 0..per_ms {
            sim.step(&mut state, &stimuli);
            if probe.observe(&state) {
                last = *probe.times_ms.last().expect("just pushed");
            }
        }
        map.observe(&state);
        if probe.times_ms.len() > protocol.verify_cycles {
            break;
        }
        if state.t_ms() - last > protocol.max_cycle_ms {
            return Err(fail(
                format!(
                    "circuit died after {} cycles (no activation for {} ms)",
                    probe.times_ms.len(),
                    protocol.max_cycle_ms
                ),
                map,
            ));
        }
    }
    if !state.is_finite() {
        return Err(Error::Unstable { t_ms: state.t_ms() });
    }

    let activations = probe.times_ms.clone();
    let cycle_lengths = activations.windows(2).map(|w| w[1] - w[0]).collect();
    let report = InductionReport {
        block_lifted_ms: lifted_ms,
        activations_ms: activations,
        cycle_lengths_ms: cycle_lengths,
        activation_map_ms: map.times,
    };
    Ok((Checkpoint::capture(sim, &state), state, report))
}
