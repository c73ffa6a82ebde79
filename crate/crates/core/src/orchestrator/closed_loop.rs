//! The ICD and tissue model in feedback: the tissue runs ahead in segments,
//! the device consumes the committed EGM, and a prescription rolls the
//! tissue back to the decision time so the therapy lands where it was
//! scheduled.

use serde::{Deserialize, Serialize};

use super::icd::{Delivery, Event, EventKind, FinalRhythm, Icd, Outcome, TherapyRecord};
use super::scenario::{
    build_patient, draw_focal_bursts, focal_schedule, sinus_schedule, EpisodeSpec, IcdParams, Scenario,
    SINUS_FIRST_MS,
};
use crate::device::PerZone;
use crate::egm::{synth_egm, LeadConfig, LeadField};
use crate::ep::{
    induce_reentry, tune_conductivity, Checkpoint, InductionReport, Simulation, StimSite, Stimulus,
    StimulusSchedule, TissueState,
};
use crate::error::{Error, Result};
use crate::sensing::{build_nsr_template, EgmTrace, NsrTemplate, NOMINAL_NSR_PEAK_MV};
use crate::therapy::TherapyKind;

/// Summary of one closed-loop episode. Contains nothing that depends on
/// wall-clock time, so identical scenarios serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub outcome: Outcome,
    pub final_rhythm: FinalRhythm,
    pub therapies_delivered: u32,
    pub therapies: Vec<TherapyRecord>,
    pub inhibits: u32,
    pub zone_entries: PerZone<u32>,
    /// Attempts used per zone when the run ended.
    pub attempts: PerZone<u32>,
    pub max_attempts: PerZone<u32>,
    pub sensed_beats: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_sensed_bpm: Option<f64>,
    pub start_ms: f64,
    pub end_ms: f64,
    pub rollbacks: u32,
    #[serde(rename = "egm_gain_mV")]
    pub egm_gain_mv: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub induction: Option<InductionReport>,
    pub config_hash: String,
    pub events: Vec<Event>,
}

impl EpisodeReport {
    fn new(icd: &Icd, outcome: Outcome, final_rhythm: FinalRhythm, events: Vec<Event>) -> Self {
        let mut zone_entries = PerZone::splat(0);
        let mut periods = Vec::new();
        for e in &events {
            match &e.kind {
                EventKind::ZoneEntry { zone } => zone_entries[*zone] += 1,
                EventKind::Sense { period_ms: Some(p), .. } => periods.push(*p),
                _ => {}
            }
        }
        let mean_sensed_bpm =
            (!periods.is_empty()).then(|| 60_000.0 * periods.len() as f64 / periods.iter().sum::<f64>());
        Self {
            outcome,
            final_rhythm,
            therapies_delivered: icd.therapies.len() as u32,
            therapies: icd.therapies.clone(),
            inhibits: icd.inhibits,
            zone_entries,
            attempts: icd.counters.tcount,
            max_attempts: icd.counters.max_t,
            sensed_beats: icd.beats,
            mean_sensed_bpm,
            start_ms: 0.0,
            end_ms: 0.0,
            rollbacks: 0,
            egm_gain_mv: 1.0,
            induction: None,
            config_hash: String::new(),
            events,
        }
    }

    /// Checks the outcome against the event log.
    pub fn check_consistency(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("inconsistent report: {m}")));
        for w in self.events.windows(2) {
            if w[1].t_ms < w[0].t_ms {
                return bad(format!("event at {} ms follows one at {} ms", w[1].t_ms, w[0].t_ms));
            }
        }
        let outcomes: Vec<_> = self
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Outcome { outcome, .. } => Some(outcome),
                _ => None,
            })
            .collect();
        if outcomes != [self.outcome] || !matches!(self.events.last().map(|e| &e.kind), Some(EventKind::Outcome { .. })) {
            return bad("the log must end with exactly one outcome matching the report".into());
        }
        let delivered: Vec<_> = self
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Therapy { kind, .. } if kind != TherapyKind::Inhibit))
            .collect();
        if delivered.len() != self.therapies.len() || self.therapies_delivered as usize != self.therapies.len() {
            return bad("therapy records disagree with the log".into());
        }
        let inhibits =
            self.events.iter().filter(|e| matches!(e.kind, EventKind::Therapy { kind: TherapyKind::Inhibit, .. })).count();
        match self.outcome {
            Outcome::NoTherapyNeeded if !delivered.is_empty() || inhibits > 0 => bad("therapy in a no-therapy run".into()),
            Outcome::Inhibited if !delivered.is_empty() || inhibits == 0 => bad("inhibited run must only inhibit".into()),
            Outcome::TerminatedAfterKTherapies if delivered.is_empty() => bad("termination without therapy".into()),
            Outcome::TherapyExhausted => {
                let FinalRhythm::Tachycardia(zone) = self.final_rhythm else {
                    return bad("exhausted run must end in a tachycardia".into());
                };
                if self.attempts[zone] < self.max_attempts[zone] {
                    return bad(format!("{zone} attempts not used up"));
                }
                if !self.therapies.last().is_some_and(|r| r.kind == TherapyKind::Shock) {
                    return bad("exhausted run must end with a shock".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Everything a closed-loop run starts from.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub sim: Simulation,
    pub state: TissueState,
    /// Sinus and ectopic stimuli for the whole run.
    pub background: StimulusSchedule,
    pub leads: LeadConfig,
    pub template: NsrTemplate,
    pub induction: Option<InductionReport>,
    pub end_ms: f64,
}

/// Builds the patient, records the NSR template and gain, and brings the
/// tissue to the start of the episode (after induction for re-entry).
pub fn prepare(scenario: &Scenario) -> Result<Prepared> {
    scenario.validate()?;
    let spec = scenario.tissue_spec();
    let tuned = tune_conductivity(spec.cv_mm_per_ms, spec.dx_mm, &spec.ionic, spec.dt_ms)?;
    let model = build_patient(scenario, tuned.diffusivity)?;
    let mut sim = Simulation::with_remodeled(model.grid, model.ionic, model.remodeled_ionic, model.dt_ms)?;
    let mut leads = scenario.egm.leads.clone();
    let (template, gain) = record_template(&mut sim, &leads, scenario)?;
    if scenario.egm.auto_gain {
        leads.gain_mv = gain;
    }
    let template = NsrTemplate::from_window(
        template.dt_ms,
        template.window_mv.iter().map(|v| v * leads.gain_mv).collect(),
    );

    let state = sim.limit_cycle_state();
    let (state, induction, start_ms) = match &model.induction {
        Some(protocol) => {
            let horizon = protocol.s1_time_ms
                + protocol.block_window_ms
                + (protocol.verify_cycles + 2) as f64 * protocol.max_cycle_ms;
            let background = sinus_schedule(sim.grid(), horizon);
            let (_, mut state, report) = induce_reentry(&mut sim, state, protocol, &background)?;
            // The block is lifted mid-millisecond; finish that millisecond.
            let per_ms = sim.steps_per_ms();
            let rem = state.steps() % per_ms;
            if rem != 0 {
                sim.run_steps(&mut state, &background, per_ms - rem);
            }
            let t = state.t_ms().round();
            (state, Some(report), t)
        }
        None => (state, None, 0.0),
    };
    let end_ms = start_ms + scenario.duration_ms.round();
    let mut background = sinus_schedule(sim.grid(), end_ms + 1.0);
    if let EpisodeSpec::Focal { site, .. } = &scenario.episode {
        let bursts = draw_focal_bursts(&scenario.episode, scenario.seed, start_ms);
        background.extend(focal_schedule(sim.grid(), *site, &bursts).stimuli);
    }
    Ok(Prepared { sim, state, background, leads, template, induction, end_ms })
}

/// NSR run from rest; returns the unit-gain template and the gain that
/// brings the near-field peak to the nominal amplitude.
fn record_template(sim: &mut Simulation, leads: &LeadConfig, scenario: &Scenario) -> Result<(NsrTemplate, f64)> {
    let ms = scenario.closed_loop.template_ms;
    let mut state = sim.limit_cycle_state();
    let sched = sinus_schedule(sim.grid(), ms as f64);
    let mut unit = leads.clone();
    unit.gain_mv = 1.0;
    let mut probe = LeadField::new(sim, &unit)?;
    let samples = sim.run_segment(&mut state, &sched, ms, &mut probe)?;
    let trace = synth_egm(&samples, &unit)?;
    // The first beat is skipped; it rises from the initial state.
    let from = (SINUS_FIRST_MS as usize).min(trace.len());
    let peak = trace.nf_mv[from..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidTrace("NSR run produced a flat near-field channel".into()));
    }
    let gain = NOMINAL_NSR_PEAK_MV / peak;
    let scaled = EgmTrace::new(
        trace.t0_ms,
        trace.dt_ms,
        trace.nf_mv.iter().map(|v| v * gain).collect(),
        trace.ff_mv.iter().map(|v| v * gain).collect(),
    )?;
    let t = build_nsr_template(&scaled, &scenario.icd.sensing)?;
    let unit_template = NsrTemplate::from_window(t.dt_ms, t.window_mv.iter().map(|v| v / gain).collect());
    Ok((unit_template, gain))
}

/// Output of a closed-loop run.
#[derive(Clone, Debug)]
pub struct ClosedLoopRun {
    pub report: EpisodeReport,
    /// Committed EGM.
    pub trace: EgmTrace,
    /// Background plus every delivered therapy.
    pub schedule: StimulusSchedule,
    pub final_state: TissueState,
    pub template: NsrTemplate,
}

/// Stimuli that carry out a therapy on the tissue.
pub fn delivery_stimuli(sim: &Simulation, delivery: &Delivery) -> Vec<Stimulus> {
    match delivery {
        Delivery::Atp(s) => s
            .pulse_times_ms
            .iter()
            .map(|&t| Stimulus::at_nodes(sim.grid().tip_footprint.clone(), t, s.pulse_duration_ms, s.amplitude))
            .collect(),
        Delivery::Shock(s) => vec![Stimulus {
            site: StimSite::AllTissue,
            onset_ms: s.onset_ms,
            duration_ms: s.duration_ms,
            amplitude: s.amplitude,
        }],
    }
}

pub fn run_closed_loop(scenario: &Scenario) -> Result<ClosedLoopRun> {
    run_prepared(prepare(scenario)?, scenario)
}

/// Runs the feedback loop from a prepared start.
pub fn run_prepared(prepared: Prepared, scenario: &Scenario) -> Result<ClosedLoopRun> {
    let Prepared { mut sim, mut state, background, leads, template, induction, end_ms } = prepared;
    let lp = scenario.closed_loop;
    let start_ms = state.t_ms().round();
    let mut probe = LeadField::new(&sim, &leads)?;
    let mut icd = Icd::new(scenario.icd.clone(), Some(template.clone()));
    let mut schedule = background;
    let mut log = Vec::new();
    let mut trace = EgmTrace::empty(start_ms + 1.0, 1.0);
    let mut checkpoints = vec![Checkpoint::capture(&sim, &state)];
    let mut rollbacks = 0;
    let interval = lp.checkpoint_interval_ms as f64;

    while state.t_ms().round() < end_ms && !icd.is_done() {
        let t = state.t_ms().round();
        let next_ckpt = ((t - start_ms) / interval).floor() * interval + interval + start_ms;
        let len = (lp.segment_ms as f64).min(next_ckpt - t).min(end_ms - t).round() as u64;
        let samples = sim.run_segment(&mut state, &schedule, len.max(1), &mut probe)?;
        let segment = synth_egm(&samples, &leads)?;

        let mut prescribed = None;
        for k in 0..segment.len() {
            let tk = segment.time_of(k);
            if let Some(d) = icd.on_sample(tk, segment.nf_mv[k], segment.ff_mv[k], &mut log)? {
                prescribed = Some((k, tk, d));
                break;
            }
            if icd.is_done() {
                break;
            }
        }

        match prescribed {
            None => {
                trace.append(&segment)?;
                if state.t_ms().round() == next_ckpt {
                    checkpoints.push(Checkpoint::capture(&sim, &state));
                }
            }
            Some((k, decision_ms, delivery)) => {
                // Keep what the device saw, discard the rest of the segment.
                let mut kept = segment.clone();
                kept.truncate_at(decision_ms + 0.5);
                debug_assert_eq!(kept.len(), k + 1);
                trace.append(&kept)?;
                let ckpt = checkpoints
                    .iter()
                    .rev()
                    .find(|c| c.t_ms.round() <= decision_ms)
                    .expect("the start checkpoint precedes every decision");
                let from = ckpt.t_ms.round();
                state = ckpt.restore(&sim)?;
                let steps = ((decision_ms - from).round() as u64) * sim.steps_per_ms();
                sim.run_steps(&mut state, &schedule, steps);
                if !state.is_finite() {
                    return Err(Error::Unstable { t_ms: state.t_ms() });
                }
                rollbacks += 1;
                log.push(Event { t_ms: decision_ms, kind: EventKind::Rollback { checkpoint_ms: from } });
                checkpoints.push(Checkpoint::capture(&sim, &state));
                schedule.extend(delivery_stimuli(&sim, &delivery));
            }
        }
    }
    let last_t = log.last().map_or(state.t_ms(), |e: &Event| e.t_ms.max(state.t_ms()));
    let (outcome, rhythm) = icd.close(last_t, &mut log);
    let mut report = EpisodeReport::new(&icd, outcome, rhythm, log);
    report.start_ms = start_ms;
    report.end_ms = state.t_ms();
    report.rollbacks = rollbacks;
    report.egm_gain_mv = leads.gain_mv;
    report.induction = induction;
    report.config_hash = sim.config_hash().to_owned();
    Ok(ClosedLoopRun { report, trace, schedule, final_state: state, template })
}

/// Runs the device over a recorded trace without feedback. Prescriptions
/// are logged but nothing is delivered.
pub fn replay_open_loop(trace: &EgmTrace, params: &IcdParams, template: Option<NsrTemplate>) -> Result<EpisodeReport> {
    trace.validate()?;
    params.validate()?;
    let mut icd = Icd::new(params.clone(), template);
    let mut log = Vec::new();
    for k in 0..trace.len() {
        icd.on_sample(trace.time_of(k), trace.nf_mv[k], trace.ff_mv[k], &mut log)?;
        if icd.is_done() {
            break;
        }
    }
    let end = trace.end_ms().max(log.last().map_or(f64::NEG_INFINITY, |e| e.t_ms));
    let (outcome, rhythm) = icd.close(end, &mut log);
    let mut report = EpisodeReport::new(&icd, outcome, rhythm, log);
    report.start_ms = trace.t0_ms;
    report.end_ms = trace.end_ms();
    Ok(report)
}
