//! Explicit operator-split monodomain solver.
//!
//! Each step applies diffusion (5-point stencil, harmonic-mean edge
//! conductances, no-flux at the sheet edge and around scar), then the
//! membrane reaction, then any active stimulus currents. Diffusion and
//! reaction are fused into one pass over the nodes; the float operations
//! are the same as running them one after the other.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::{harmonic_mean, TissueGrid};
use super::ionic::{IonicParams, Rates, STIM_SCALE};
use crate::error::{Error, Result};

pub const DEFAULT_DT_MS: f64 = 0.05;

/// Where a stimulus current is injected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimSite {
    /// Explicit node set (flat grid indices).
    Nodes(Vec<usize>),
    /// Every non-scar node (field shock).
    AllTissue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub site: StimSite,
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub amplitude: f64,
}

impl Stimulus {
    pub fn at_nodes(nodes: Vec<usize>, onset_ms: f64, duration_ms: f64, amplitude: f64) -> Self {
        Self { site: StimSite::Nodes(nodes), onset_ms, duration_ms, amplitude }
    }
}

/// Ordered list of stimulus pulses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StimulusSchedule {
    pub stimuli: Vec<Stimulus>,
}

impl StimulusSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, stim: Stimulus) {
        self.stimuli.push(stim);
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = Stimulus>) {
        self.stimuli.extend(other);
    }

    /// Periodic pacing of a site: pulses at `first_ms + k·cycle_ms` below `until_ms`.
    pub fn periodic(
        site: &[usize],
        first_ms: f64,
        cycle_ms: f64,
        until_ms: f64,
        duration_ms: f64,
        amplitude: f64,
    ) -> Self {
        let mut out = Self::new();
        let mut t = first_ms;
        while t < until_ms {
            out.push(Stimulus::at_nodes(site.to_vec(), t, duration_ms, amplitude));
            t += cycle_ms;
        }
        out
    }

    pub fn validate(&self, grid: &TissueGrid) -> Result<()> {
        for s in &self.stimuli {
            if !(s.duration_ms.is_finite() && s.duration_ms > 0.0) {
                return Err(Error::Config("stimulus duration must be positive".into()));
            }
            if !(s.onset_ms.is_finite() && s.amplitude.is_finite()) {
                return Err(Error::Config("stimulus onset and amplitude must be finite".into()));
            }
            if let StimSite::Nodes(nodes) = &s.site {
                if nodes.iter().any(|&k| k >= grid.len() || grid.scar_mask[k]) {
                    return Err(Error::Config("stimulus site outside the tissue domain".into()));
                }
            }
        }
        Ok(())
    }
}

/// Transmembrane potential and gate fields.
///
/// Fields are stored with a one-node ghost border (row stride `nx + 2`) so
/// the stencil needs no boundary branches; ghost and scar nodes stay at
/// `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TissueState {
    pub(crate) steps: u64,
    pub(crate) dt_ms: f64,
    pub(crate) nx: usize,
    pub(crate) ny: usize,
    pub(crate) vm: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

impl TissueState {
    pub fn uniform(nx: usize, ny: usize, dt_ms: f64, vm0: f64, h0: f64, scar: &[bool]) -> Self {
        let stride = nx + 2;
        let mut vm = vec![0.0; stride * (ny + 2)];
        let mut h = vec![1.0; stride * (ny + 2)];
        for j in 0..ny {
            for i in 0..nx {
                if !scar[j * nx + i] {
                    let p = (j + 1) * stride + i + 1;
                    vm[p] = vm0;
                    h[p] = h0;
                }
            }
        }
        Self { steps: 0, dt_ms, nx, ny, vm, h }
    }

    /// Rebuilds a state from unpadded `nx·ny` fields.
    pub fn from_fields(
        nx: usize,
        ny: usize,
        dt_ms: f64,
        steps: u64,
        vm: &[f64],
        h: &[f64],
    ) -> Result<Self> {
        if vm.len() != nx * ny || h.len() != nx * ny {
            return Err(Error::Checkpoint(format!(
                "field length {} / {} does not match {nx}×{ny}",
                vm.len(),
                h.len()
            )));
        }
        let mut state = Self::uniform(nx, ny, dt_ms, 0.0, 1.0, &vec![true; nx * ny]);
        state.steps = steps;
        for k in 0..nx * ny {
            let p = state.padded(k);
            state.vm[p] = vm[k];
            state.h[p] = h[k];
        }
        Ok(state)
    }

    #[inline]
    pub(crate) fn padded(&self, idx: usize) -> usize {
        let (i, j) = (idx % self.nx, idx / self.nx);
        (j + 1) * (self.nx + 2) + i + 1
    }

    pub fn t_ms(&self) -> f64 {
        self.steps as f64 * self.dt_ms
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    #[inline]
    pub fn vm(&self, idx: usize) -> f64 {
        self.vm[self.padded(idx)]
    }

    #[inline]
    pub fn h(&self, idx: usize) -> f64 {
        self.h[self.padded(idx)]
    }

    /// Unpadded `nx·ny` copy of the potential field.
    pub fn vm_field(&self) -> Vec<f64> {
        (0..self.nx * self.ny).map(|k| self.vm(k)).collect()
    }

    pub fn h_field(&self) -> Vec<f64> {
        (0..self.nx * self.ny).map(|k| self.h(k)).collect()
    }

    pub fn set_vm(&mut self, idx: usize, value: f64) {
        let p = self.padded(idx);
        self.vm[p] = value;
    }

    pub fn set_h(&mut self, idx: usize, value: f64) {
        let p = self.padded(idx);
        self.h[p] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.vm.iter().all(|v| v.is_finite())
    }
}

/// Compiled solver for one grid: stencil weights, membrane parameters and
/// time step.
#[derive(Clone, Debug)]
pub struct Simulation {
    grid: TissueGrid,
    ionic: IonicParams,
    /// Membrane parameters of nodes in `grid.remodeled_mask`.
    remodeled: Option<IonicParams>,
    dt_ms: f64,
    stride: usize,
    /// Per padded node: 1 where the remodeled parameters apply.
    region: Vec<u8>,
    /// `east[p]`: coupling `D/dx²` between padded nodes `p` and `p + 1`.
    east: Vec<f64>,
    /// `north[p]`: coupling between `p` and `p + stride`.
    north: Vec<f64>,
    tissue: Vec<usize>,
    reaction: bool,
    scratch: Vec<f64>,
    config_hash: String,
}

impl Simulation {
    pub fn new(grid: TissueGrid, ionic: IonicParams, dt_ms: f64) -> Result<Self> {
        Self::with_remodeled(grid, ionic, None, dt_ms)
    }

    /// Solver whose remodeled nodes use `remodeled` instead of `ionic`.
    pub fn with_remodeled(
        grid: TissueGrid,
        ionic: IonicParams,
        remodeled: Option<IonicParams>,
        dt_ms: f64,
    ) -> Result<Self> {
        grid.validate()?;
        ionic.validate()?;
        if let Some(r) = &remodeled {
            r.validate()?;
        }
        if !(dt_ms.is_finite() && dt_ms > 0.0) {
            return Err(Error::Config("time step must be positive".into()));
        }
        if dt_ms > 0.1 {
            return Err(Error::Config(format!("time step {dt_ms} ms exceeds 0.1 ms")));
        }
        let per_ms = 1.0 / dt_ms;
        if (per_ms - per_ms.round()).abs() > 1e-9 {
            return Err(Error::Config("time step must divide 1 ms".into()));
        }
        let bound = grid.stable_dt_ms();
        if dt_ms > bound {
            return Err(Error::UnstableTimeStep { dt_ms, bound_ms: bound });
        }
        let stride = grid.nx + 2;
        let len = stride * (grid.ny + 2);
        let mut sim = Self {
            config_hash: String::new(),
            east: vec![0.0; len],
            north: vec![0.0; len],
            tissue: Vec::new(),
            reaction: true,
            scratch: vec![0.0; len],
            region: vec![0; len],
            stride,
            grid,
            ionic,
            remodeled,
            dt_ms,
        };
        sim.rebuild_stencil();
        Ok(sim)
    }

    fn rebuild_stencil(&mut self) {
        let g = &self.grid;
        let scale = g.diffusivity / (g.dx_mm * g.dx_mm);
        let sigma = |k: usize| if g.scar_mask[k] { 0.0 } else { g.conductivity[k] };
        self.east.iter_mut().for_each(|w| *w = 0.0);
        self.north.iter_mut().for_each(|w| *w = 0.0);
        self.region.iter_mut().for_each(|r| *r = 0);
        self.tissue.clear();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                let p = (j + 1) * self.stride + i + 1;
                if g.scar_mask[k] {
                    continue;
                }
                self.tissue.push(p);
                if self.remodeled.is_some() && g.remodeled_mask[k] {
                    self.region[p] = 1;
                }
                if i + 1 < g.nx {
                    self.east[p] = scale * harmonic_mean(sigma(k), sigma(k + 1));
                }
                if j + 1 < g.ny {
                    self.north[p] = scale * harmonic_mean(sigma(k), sigma(k + g.nx));
                }
            }
        }
        self.config_hash = hash_config(&self.grid, &self.ionic, self.remodeled.as_ref(), self.dt_ms);
    }

    pub fn grid(&self) -> &TissueGrid {
        &self.grid
    }

    pub fn ionic(&self) -> &IonicParams {
        &self.ionic
    }

    pub fn remodeled_ionic(&self) -> Option<&IonicParams> {
        self.remodeled.as_ref()
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn steps_per_ms(&self) -> u64 {
        (1.0 / self.dt_ms).round() as u64
    }

    /// SHA-256 over grid, membrane parameters and time step.
    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Replaces per-node conductivity (used by the induction protocol to
    /// open and close a conduction block).
    pub fn set_conductivity(&mut self, conductivity: Vec<f64>) -> Result<()> {
        let mut grid = self.grid.clone();
        grid.conductivity = conductivity;
        grid.validate()?;
        let bound = grid.stable_dt_ms();
        if self.dt_ms > bound {
            return Err(Error::UnstableTimeStep { dt_ms: self.dt_ms, bound_ms: bound });
        }
        self.grid = grid;
        self.rebuild_stencil();
        Ok(())
    }

    /// Disables the membrane reaction (diffusion-only stepping for
    /// conservation checks).
    pub fn set_reaction(&mut self, enabled: bool) {
        self.reaction = enabled;
    }

    pub fn uniform_state(&self, vm0: f64, h0: f64) -> TissueState {
        TissueState::uniform(self.grid.nx, self.grid.ny, self.dt_ms, vm0, h0, &self.grid.scar_mask)
    }

    /// Resting tissue initialized from the paced single-cell limit cycle.
    /// Remodeled nodes start from their own limit cycle.
    pub fn limit_cycle_state(&self) -> TissueState {
        let (vm0, h0) = super::ionic::init_limit_cycle(&self.ionic, self.dt_ms);
        let mut state = self.uniform_state(vm0, h0);
        if let Some(r) = &self.remodeled {
            let (vm1, h1) = super::ionic::init_limit_cycle(r, self.dt_ms);
            for &p in &self.tissue {
                if self.region[p] == 1 {
                    state.vm[p] = vm1;
                    state.h[p] = h1;
                }
            }
        }
        state
    }

    fn check_state(&self, state: &TissueState) {
        debug_assert_eq!(state.dims(), (self.grid.nx, self.grid.ny));
        debug_assert_eq!(state.dt_ms, self.dt_ms);
    }

    #[inline]
    fn laplacian(&self, vm: &[f64], p: usize) -> f64 {
        let s = self.stride;
        let v = vm[p];
        self.east[p] * (vm[p + 1] - v)
            + self.east[p - 1] * (vm[p - 1] - v)
            + self.north[p] * (vm[p + s] - v)
            + self.north[p - s] * (vm[p - s] - v)
    }

    /// Diffusion only: `vm += dt·∇·(D∇vm)`. Does not advance time.
    pub fn diffuse(&mut self, state: &mut TissueState) {
        self.check_state(state);
        let dt = self.dt_ms;
        let mut next = std::mem::take(&mut self.scratch);
        next.copy_from_slice(&state.vm);
        for &p in &self.tissue {
            next[p] = state.vm[p] + dt * self.laplacian(&state.vm, p);
        }
        std::mem::swap(&mut state.vm, &mut next);
        self.scratch = next;
    }

    /// One full step: diffusion, reaction, stimulus injection.
    pub fn step(&mut self, state: &mut TissueState, stimuli: &StimulusSchedule) {
        self.check_state(state);
        let dt = self.dt_ms;
        let (nx, s) = (self.grid.nx, self.stride);
        let rates = [Rates::from(&self.ionic), Rates::from(self.remodeled.as_ref().unwrap_or(&self.ionic))];
        let reaction = self.reaction;
        let mut next = std::mem::take(&mut self.scratch);
        for j in 1..=self.grid.ny {
            let p0 = j * s + 1;
            let vm = &state.vm;
            let row = p0..p0 + nx;
            let centre = &vm[row.clone()];
            let west = &vm[p0 - 1..p0 - 1 + nx];
            let east = &vm[p0 + 1..p0 + 1 + nx];
            let north = &vm[p0 + s..p0 + s + nx];
            let south = &vm[p0 - s..p0 - s + nx];
            let w_e = &self.east[row.clone()];
            let w_w = &self.east[p0 - 1..p0 - 1 + nx];
            let w_n = &self.north[row.clone()];
            let w_s = &self.north[p0 - s..p0 - s + nx];
            let region = &self.region[row.clone()];
            let out = &mut next[row.clone()];
            let gate = &mut state.h[row];
            for i in 0..nx {
                let v = centre[i];
                let lap = w_e[i] * (east[i] - v)
                    + w_w[i] * (west[i] - v)
                    + w_n[i] * (north[i] - v)
                    + w_s[i] * (south[i] - v);
                let vd = v + dt * lap;
                if reaction {
                    let (v2, h2) = rates[region[i] as usize].step(vd, gate[i], dt);
                    out[i] = v2;
                    gate[i] = h2;
                } else {
                    out[i] = vd;
                }
            }
        }
        std::mem::swap(&mut state.vm, &mut next);
        self.scratch = next;
        self.inject(state, stimuli);
        state.steps += 1;
    }

    fn inject(&self, state: &mut TissueState, stimuli: &StimulusSchedule) {
        let n = state.steps;
        let dt = self.dt_ms;
        for s in &stimuli.stimuli {
            let start = (s.onset_ms / dt).round() as i64;
            let end = start + ((s.duration_ms / dt).round() as i64).max(1);
            if (n as i64) < start || (n as i64) >= end {
                continue;
            }
            let dv = dt * s.amplitude * STIM_SCALE;
            match &s.site {
                StimSite::Nodes(nodes) => {
                    for &k in nodes {
                        let p = state.padded(k);
                        state.vm[p] += dv;
                    }
                }
                StimSite::AllTissue => {
                    for &p in &self.tissue {
                        state.vm[p] += dv;
                    }
                }
            }
        }
    }

    /// Advances `n` steps.
    pub fn run_steps(&mut self, state: &mut TissueState, stimuli: &StimulusSchedule, n: u64) {
        for _ in 0..n {
            self.step(state, stimuli);
        }
    }

    /// Advances `duration_ms` (whole milliseconds), sampling the probes after
    /// every millisecond. Sample `k` corresponds to `t_start + k + 1` ms.
    pub fn run_segment<P: Probe>(
        &mut self,
        state: &mut TissueState,
        stimuli: &StimulusSchedule,
        duration_ms: u64,
        probes: &mut P,
    ) -> Result<Vec<P::Sample>> {
        let per_ms = self.steps_per_ms();
        let mut out = Vec::with_capacity(duration_ms as usize);
        for _ in 0..duration_ms {
            self.run_steps(state, stimuli, per_ms);
            let sample = probes.sample(self, state);
            if !P::is_finite(&sample) {
                return Err(Error::Unstable { t_ms: state.t_ms() });
            }
            out.push(sample);
        }
        Ok(out)
    }

    /// Flat grid indices of the non-scar nodes, in the order used by
    /// [`Simulation::tissue_divergence`] and [`Simulation::project_sources`].
    pub fn tissue_indices(&self) -> Vec<usize> {
        let s = self.stride;
        self.tissue.iter().map(|&p| self.grid.index(p % s - 1, p / s - 1)).collect()
    }

    /// Discrete `∇·(D∇vm)` (per ms) at each tissue node; reuses the
    /// diffusion stencil.
    pub fn tissue_divergence(&self, state: &TissueState) -> Vec<f64> {
        self.tissue.iter().map(|&p| self.laplacian(&state.vm, p)).collect()
    }

    /// `out[c] = Σ_n weights[c][n] · ∇·(D∇vm)_n` over tissue nodes, for each
    /// weight vector (indexed like [`Simulation::tissue_indices`]).
    pub fn project_sources(&self, state: &TissueState, weights: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; weights.len()];
        for (n, &p) in self.tissue.iter().enumerate() {
            let lap = self.laplacian(&state.vm, p);
            for (o, w) in out.iter_mut().zip(weights) {
                *o += w[n] * lap;
            }
        }
        out
    }
}

/// Something sampled once per millisecond during `run_segment`.
pub trait Probe {
    type Sample;
    fn sample(&mut self, sim: &Simulation, state: &TissueState) -> Self::Sample;
    fn is_finite(_sample: &Self::Sample) -> bool {
        true
    }
}

/// Probe that records nothing.
pub struct NoProbe;

impl Probe for NoProbe {
    type Sample = ();
    fn sample(&mut self, _: &Simulation, _: &TissueState) {}
}

/// Records `vm` at a set of nodes.
pub struct NodeProbe(pub Vec<usize>);

impl Probe for NodeProbe {
    type Sample = Vec<f64>;
    fn sample(&mut self, _: &Simulation, state: &TissueState) -> Vec<f64> {
        self.0.iter().map(|&k| state.vm(k)).collect()
    }
    fn is_finite(sample: &Vec<f64>) -> bool {
        sample.iter().all(|v| v.is_finite())
    }
}

pub fn hash_config(grid: &TissueGrid, ionic: &IonicParams, remodeled: Option<&IonicParams>, dt_ms: f64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(grid).expect("grid serializes"));
    hasher.update(serde_json::to_vec(ionic).expect("ionic params serialize"));
    hasher.update(serde_json::to_vec(&remodeled).expect("ionic params serialize"));
    hasher.update(dt_ms.to_le_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
