//! Extracellular potentials at virtual electrodes and EGM assembly.
//!
//! Potentials use the infinite homogeneous volume conductor: every tissue
//! node is a current source of strength `−∇·(D∇vm_mV)·dV` and contributes
//! `source / (4π r)` at the electrode. The divergence is the diffusion
//! stencil itself, so scar and sheet edges are handled for free. Units are
//! arbitrary until scaled by the lead gain.

use serde::{Deserialize, Serialize};

use crate::ep::{Probe, Simulation, TissueGrid, TissueState};
use crate::error::{Error, Result};
use crate::sensing::EgmTrace;

/// Electrodes must sit at least this fraction of `dx` away from any node.
pub const MIN_CLEARANCE_FRACTION: f64 = 0.25;
/// Fewest sample points allowed on a segment electrode.
pub const MIN_SEGMENT_POINTS: usize = 5;
pub const DEFAULT_COIL_POINTS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Electrode {
    pub name: String,
    /// Sample points (mm); the potential is their mean. The tissue sheet
    /// lies in the plane z = 0.
    pub points_mm: Vec<[f64; 3]>,
}

impl Electrode {
    pub fn point(name: &str, p: [f64; 3]) -> Self {
        Self { name: name.into(), points_mm: vec![p] }
    }

    /// Straight segment from `a` to `b` sampled at `n` evenly spaced points
    /// (ends included).
    pub fn segment(name: &str, a: [f64; 3], b: [f64; 3], n: usize) -> Result<Self> {
        if n < MIN_SEGMENT_POINTS {
            return Err(Error::Config(format!(
                "segment electrode `{name}` needs at least {MIN_SEGMENT_POINTS} points, got {n}"
            )));
        }
        let points_mm = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])]
            })
            .collect();
        Ok(Self { name: name.into(), points_mm })
    }

    /// Distance (mm) from the closest sample point to the closest grid node.
    pub fn clearance_mm(&self, grid: &TissueGrid) -> f64 {
        self.points_mm
            .iter()
            .map(|p| {
                let node = grid.nearest_node(p[0], p[1]);
                let (x, y) = grid.position_mm(node);
                ((p[0] - x).powi(2) + (p[1] - y).powi(2) + p[2] * p[2]).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self, grid: &TissueGrid) -> Result<()> {
        if self.points_mm.is_empty() {
            return Err(Error::Config(format!("electrode `{}` has no points", self.name)));
        }
        if self.points_mm.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config(format!("electrode `{}` has a non-finite coordinate", self.name)));
        }
        let min_mm = MIN_CLEARANCE_FRACTION * grid.dx_mm;
        let distance_mm = self.clearance_mm(grid);
        if distance_mm < min_mm {
            return Err(Error::ElectrodeClearance { name: self.name.clone(), distance_mm, min_mm });
        }
        Ok(())
    }

    /// Per-tissue-node lead-field weights (ordered like
    /// [`Simulation::tissue_indices`]): `φ = Σ w_n · ∇·(D∇vm)_n`.
    pub fn weights(&self, sim: &Simulation) -> Vec<f64> {
        let grid = sim.grid();
        let ionic = sim.ionic();
        let dv = grid.dx_mm.powi(3);
        // vm_mV = rest + amp·vm, so the source density scales by amp.
        let k = -ionic.vm_amp_mv * dv / (4.0 * std::f64::consts::PI * self.points_mm.len() as f64);
        sim.tissue_indices()
            .into_iter()
            .map(|n| {
                let (x, y) = grid.position_mm(n);
                self.points_mm
                    .iter()
                    .map(|p| k / ((p[0] - x).powi(2) + (p[1] - y).powi(2) + p[2] * p[2]).sqrt())
                    .sum()
            })
            .collect()
    }
}

/// Electrode set and channel gain. Near field is tip − ring, far field is
/// coil − can.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadConfig {
    pub tip: Electrode,
    pub ring: Electrode,
    pub coil: Electrode,
    pub can: Electrode,
    /// mV per model unit. Runs recalibrate this from the NSR near-field peak.
    pub gain_mv: f64,
}

impl Default for LeadConfig {
    fn default() -> Self {
        Self {
            tip: Electrode::point("tip", [40.0, 10.0, 1.0]),
            ring: Electrode::point("ring", [40.0, 13.0, 1.0]),
            coil: Electrode::segment("coil", [33.0, 10.0, 2.0], [47.0, 10.0, 2.0], DEFAULT_COIL_POINTS)
                .expect("default coil has enough points"),
            can: Electrode::point("can", [-100.0, 60.0, 40.0]),
            gain_mv: 1.0,
        }
    }
}

impl LeadConfig {
    pub fn electrodes(&self) -> [&Electrode; 4] {
        [&self.tip, &self.ring, &self.coil, &self.can]
    }

    pub fn validate(&self, grid: &TissueGrid) -> Result<()> {
        if !(self.gain_mv.is_finite() && self.gain_mv > 0.0) {
            return Err(Error::Config("lead gain must be positive".into()));
        }
        for e in self.electrodes() {
            e.validate(grid)?;
        }
        for e in [&self.tip, &self.ring] {
            let p = e.points_mm[0];
            let inside = (0.0..=grid.width_mm()).contains(&p[0]) && (0.0..=grid.height_mm()).contains(&p[1]);
            if !inside {
                return Err(Error::Config(format!("electrode `{}` lies outside the sheet", e.name)));
            }
        }
        Ok(())
    }
}

/// Potential at one electrode, in model units.
pub fn phi_e(sim: &Simulation, state: &TissueState, electrode: &Electrode) -> Result<f64> {
    electrode.validate(sim.grid())?;
    Ok(sim.project_sources(state, &[electrode.weights(sim)])[0])
}

/// Potentials at tip, ring, coil and can, in that order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub t_ms: f64,
    pub phi: [f64; 4],
}

impl ProbeSample {
    pub fn is_finite(&self) -> bool {
        self.phi.iter().all(|v| v.is_finite())
    }
}

/// Precomputed lead field for the four electrodes of a lead configuration.
#[derive(Clone, Debug)]
pub struct LeadField {
    weights: Vec<Vec<f64>>,
}

impl LeadField {
    pub fn new(sim: &Simulation, leads: &LeadConfig) -> Result<Self> {
        leads.validate(sim.grid())?;
        Ok(Self { weights: leads.electrodes().iter().map(|e| e.weights(sim)).collect() })
    }

    pub fn sample(&self, sim: &Simulation, state: &TissueState) -> ProbeSample {
        let v = sim.project_sources(state, &self.weights);
        ProbeSample { t_ms: state.t_ms().round(), phi: [v[0], v[1], v[2], v[3]] }
    }
}

impl Probe for LeadField {
    type Sample = ProbeSample;

    fn sample(&mut self, sim: &Simulation, state: &TissueState) -> ProbeSample {
        LeadField::sample(self, sim, state)
    }

    fn is_finite(sample: &ProbeSample) -> bool {
        sample.is_finite()
    }
}

/// Differences the electrode potentials into near- and far-field channels.
/// Samples must be 1 ms apart.
pub fn synth_egm(samples: &[ProbeSample], leads: &LeadConfig) -> Result<EgmTrace> {
    let Some(first) = samples.first() else {
        return Ok(EgmTrace::empty(0.0, 1.0));
    };
    let g = leads.gain_mv;
    let mut nf = Vec::with_capacity(samples.len());
    let mut ff = Vec::with_capacity(samples.len());
    for (k, s) in samples.iter().enumerate() {
        let expected = first.t_ms + k as f64;
        if (s.t_ms - expected).abs() > 1e-6 {
            return Err(Error::CadenceGap { expected_ms: expected, found_ms: s.t_ms });
        }
        nf.push(g * (s.phi[0] - s.phi[1]));
        ff.push(g * (s.phi[2] - s.phi[3]));
    }
    EgmTrace::new(first.t_ms, 1.0, nf, ff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ep::{IonicParams, Stimulus, StimulusSchedule};

    fn sim(nx: usize, ny: usize) -> Simulation {
        Simulation::new(TissueGrid::sheet(nx, ny, 0.5, 0.2), IonicParams::default(), 0.05).unwrap()
    }

    fn small_leads() -> LeadConfig {
        LeadConfig {
            tip: Electrode::point("tip", [5.0, 3.0, 1.0]),
            ring: Electrode::point("ring", [5.0, 6.0, 1.0]),
            coil: Electrode::segment("coil", [2.0, 3.0, 2.0], [8.0, 3.0, 2.0], 5).unwrap(),
            can: Electrode::point("can", [-30.0, 20.0, 15.0]),
            gain_mv: 1.0,
        }
    }

    fn field(s: &Simulation, f: impl Fn(usize, usize) -> f64) -> TissueState {
        let g = s.grid();
        let vm: Vec<f64> = (0..g.len()).map(|k| f(k % g.nx, k / g.nx)).collect();
        TissueState::from_fields(g.nx, g.ny, 0.05, 0, &vm, &vec![1.0; g.len()]).unwrap()
    }

    #[test]
    fn uniform_field_gives_zero() {
        let s = sim(21, 15);
        let st = field(&s, |_, _| 0.8);
        for e in small_leads().electrodes() {
            assert_eq!(phi_e(&s, &st, e).unwrap(), 0.0);
        }
    }

    #[test]
    fn potential_is_linear_in_vm() {
        let s = sim(21, 15);
        let a = field(&s, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let b = field(&s, |i, j| if i > 10 && j < 5 { 1.0 } else { 0.0 });
        let ab = field(&s, |i, j| {
            ((i * 7 + j * 3) % 11) as f64 / 11.0 + if i > 10 && j < 5 { 1.0 } else { 0.0 }
        });
        let e = &small_leads().tip;
        let (pa, pb, pab) = (phi_e(&s, &a, e).unwrap(), phi_e(&s, &b, e).unwrap(), phi_e(&s, &ab, e).unwrap());
        assert!((pab - pa - pb).abs() < 1e-9 * (1.0 + pab.abs()));
    }

    #[test]
    fn equal_and_opposite_sources_cancel_at_midplane() {
        let s = sim(21, 15);
        // Bumps at x = 3 mm and x = 7 mm; the electrode sits at x = 5 mm.
        let st = field(&s, |i, j| match (i, j) {
            (6, 7) => 1.0,
            (14, 7) => -1.0,
            _ => 0.0,
        });
        let e = Electrode::point("mid", [5.0, 3.5, 1.0]);
        assert!(phi_e(&s, &st, &e).unwrap().abs() < 1e-12);
    }

    #[test]
    fn clearance_is_enforced() {
        let g = TissueGrid::sheet(21, 15, 0.5, 0.2);
        let on_node = Electrode::point("tip", [5.0, 3.0, 0.0]);
        assert!(matches!(on_node.validate(&g), Err(Error::ElectrodeClearance { .. })));
        assert!(Electrode::point("tip", [5.0, 3.0, 0.2]).validate(&g).is_ok());
        assert!(Electrode::segment("coil", [0.0; 3], [1.0; 3], 4).is_err());
    }

    #[test]
    fn swapping_tip_and_ring_negates_near_field() {
        let s = sim(21, 15);
        let st = field(&s, |i, j| ((i * 5 + j * 9) % 13) as f64 / 13.0);
        let leads = small_leads();
        let mut swapped = leads.clone();
        std::mem::swap(&mut swapped.tip, &mut swapped.ring);
        let a = LeadField::new(&s, &leads).unwrap().sample(&s, &st);
        let b = LeadField::new(&s, &swapped).unwrap().sample(&s, &st);
        let ta = synth_egm(&[a], &leads).unwrap();
        let tb = synth_egm(&[b], &swapped).unwrap();
        assert_eq!(ta.nf_mv[0], -tb.nf_mv[0]);
        assert_eq!(ta.ff_mv, tb.ff_mv);
    }

    #[test]
    fn cadence_gaps_are_rejected() {
        let leads = small_leads();
        let s = |t| ProbeSample { t_ms: t, phi: [0.0; 4] };
        assert!(synth_egm(&[], &leads).unwrap().is_empty());
        let ok = synth_egm(&[s(10.0), s(11.0), s(12.0)], &leads).unwrap();
        assert_eq!(ok.t0_ms, 10.0);
        assert_eq!(ok.nf_mv, vec![0.0; 3]);
        assert!(matches!(synth_egm(&[s(10.0), s(12.0)], &leads), Err(Error::CadenceGap { .. })));
    }

    /// Brute-force potential with an independent 5-point stencil (homogeneous
    /// sheet, no-flux edges).
    fn oracle_phi(g: &TissueGrid, st: &TissueState, p: [f64; 3], amp: f64) -> f64 {
        let d = g.diffusivity / (g.dx_mm * g.dx_mm);
        let v = |i: i64, j: i64| {
            let i = i.clamp(0, g.nx as i64 - 1) as usize;
            let j = j.clamp(0, g.ny as i64 - 1) as usize;
            st.vm(g.index(i, j))
        };
        let mut phi = 0.0;
        for j in 0..g.ny as i64 {
            for i in 0..g.nx as i64 {
                let c = v(i, j);
                let lap = d * (v(i + 1, j) + v(i - 1, j) + v(i, j + 1) + v(i, j - 1) - 4.0 * c);
                let (x, y) = (i as f64 * g.dx_mm, j as f64 * g.dx_mm);
                let r = ((p[0] - x).powi(2) + (p[1] - y).powi(2) + p[2] * p[2]).sqrt();
                phi += -amp * lap * g.dx_mm.powi(3) / (4.0 * std::f64::consts::PI * r);
            }
        }
        phi
    }

    #[test]
    fn paced_beat_gives_biphasic_near_field() {
        let mut s = sim(41, 21);
        let mut st = s.limit_cycle_state();
        let mut sched = StimulusSchedule::new();
        sched.push(Stimulus::at_nodes(s.grid().columns(0..2), 0.0, 2.0, 1000.0));
        let tip = Electrode::point("tip", [10.0, 5.0, 1.0]);
        let w = vec![tip.weights(&s)];
        let amp = s.ionic().vm_amp_mv;
        let mut trace = Vec::new();
        for _ in 0..80 {
            s.run_steps(&mut st, &sched, 20);
            let phi = s.project_sources(&st, &w)[0];
            let oracle = oracle_phi(s.grid(), &st, tip.points_mm[0], amp);
            assert!((phi - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "{phi} vs {oracle}");
            trace.push(phi);
        }
        let max = trace.iter().cloned().fold(f64::MIN, f64::max);
        let min = trace.iter().cloned().fold(f64::MAX, f64::min);
        let peak = max.max(-min);
        assert!(peak > 0.0);
        assert!(max > 0.2 * peak && min < -0.2 * peak, "not biphasic: max {max}, min {min}");
    }

    #[test]
    fn can_potential_decays_with_distance() {
        let mut s = sim(41, 21);
        let mut st = s.limit_cycle_state();
        let mut sched = StimulusSchedule::new();
        sched.push(Stimulus::at_nodes(s.grid().columns(0..2), 0.0, 2.0, 1000.0));
        let cans: Vec<Electrode> =
            [20.0, 40.0, 80.0, 160.0].iter().map(|&d| Electrode::point("can", [-d, 5.0, d / 2.0])).collect();
        let w: Vec<Vec<f64>> = cans.iter().map(|c| c.weights(&s)).collect();
        let mut peak = vec![0.0f64; cans.len()];
        for _ in 0..60 {
            s.run_steps(&mut st, &sched, 20);
            for (pk, v) in peak.iter_mut().zip(s.project_sources(&st, &w)) {
                *pk = pk.max(v.abs());
            }
        }
        assert!(peak.windows(2).all(|p| p[1] < p[0]), "{peak:?}");
    }
}
