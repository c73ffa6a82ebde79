//! The virtual device: sensing, morphology, detection, prescription and
//! the episode supervisor that decides when an episode is over.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::scenario::{IcdParams, TerminationParams};
use crate::device::{DetectionMode, DetectionParams, Detector, DetectorEvent, ZoneId};
use crate::error::{Error, Result};
use crate::sensing::{vtc_score, window_shape, BeatSensor, NsrTemplate, WINDOW_POST_MS, WINDOW_PRE_MS};
use crate::therapy::{
    prescribe, schedule_atp, schedule_shock, select_scheme, AtpScheme, PulseSchedule, ShockSpec, TherapyCounters,
    TherapyKind,
};

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_ms: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Sense {
        #[serde(skip_serializing_if = "Option::is_none")]
        period_ms: Option<f64>,
        vtc: f64,
    },
    ZoneEntry {
        zone: ZoneId,
    },
    ZoneExit {
        zone: ZoneId,
    },
    Sustained {
        zone: ZoneId,
        t_zone_ms: f64,
        mode: DetectionMode,
    },
    Therapy {
        zone: ZoneId,
        kind: TherapyKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scheme: Option<AtpScheme>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pulses: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        avg_vperiod_ms: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shock_onset_ms: Option<f64>,
    },
    /// EP state restored to `checkpoint_ms` and re-run to the decision time.
    Rollback {
        checkpoint_ms: f64,
    },
    /// Sensing resumes after therapy blanking; re-detection starts.
    Redetection,
    Terminated,
    Outcome {
        outcome: Outcome,
        therapies: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    NoTherapyNeeded,
    Inhibited,
    TerminatedAfterKTherapies,
    TherapyExhausted,
}

/// Rhythm at the end of the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalRhythm {
    /// No sustained tachycardia at the end of the run.
    Nsr,
    /// Treated episode neither restored nor re-detected within the run.
    Unresolved,
    /// Still sustained in a zone when therapy ran out.
    Tachycardia(ZoneId),
}

/// Whether post-therapy rhythm counts as restored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationStatus {
    Terminated,
    Ongoing,
}

/// Applies the post-therapy rule to the periods sensed after therapy, in
/// order, starting from a fresh re-detection window: terminated iff
/// `slow_beats` consecutive periods at or above the VT1 threshold occur
/// inside the observation window before any zone re-sustains.
pub fn classify_termination(periods: &[f64], p: &DetectionParams, rule: &TerminationParams) -> TerminationStatus {
    let mut det = Detector::new(p.clone());
    det.mode = DetectionMode::Redetection;
    let mut t = 0.0;
    det.on_beat(t, 0.0);
    let mut run = 0;
    for &period in periods {
        t += period;
        if t > rule.observation_ms {
            break;
        }
        if det.on_beat(t, 0.0).1.is_some() {
            return TerminationStatus::Ongoing;
        }
        run = if period >= p.th_ms[ZoneId::Vt1] { run + 1 } else { 0 };
        if run >= rule.slow_beats {
            return TerminationStatus::Terminated;
        }
    }
    TerminationStatus::Ongoing
}

/// A therapy the EP side must deliver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Delivery {
    Atp(PulseSchedule),
    Shock(ShockSpec),
}

impl Delivery {
    /// First stimulus onset.
    pub fn onset_ms(&self) -> f64 {
        match self {
            Delivery::Atp(s) => s.pulse_times_ms.first().copied().unwrap_or(f64::INFINITY),
            Delivery::Shock(s) => s.onset_ms,
        }
    }

    /// End of the last stimulus.
    pub fn end_ms(&self) -> f64 {
        match self {
            Delivery::Atp(s) => s.end_ms(),
            Delivery::Shock(s) => s.onset_ms + s.duration_ms,
        }
    }
}

/// Summary of one delivered therapy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TherapyRecord {
    pub t_ms: f64,
    pub zone: ZoneId,
    pub kind: TherapyKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<AtpScheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_vperiod_ms: Option<f64>,
    pub n_pulses: usize,
    pub onset_ms: f64,
    pub end_ms: f64,
}

#[derive(Clone, Debug)]
struct Observation {
    start_ms: f64,
    slow_run: usize,
}

/// Streaming device model. Feed it the EGM one sample at a time.
///
/// A beat is evaluated once its morphology window is complete, i.e.
/// `WINDOW_POST_MS` after the marker; therapy decisions are timed there.
#[derive(Clone, Debug)]
pub struct Icd {
    params: IcdParams,
    template: Option<NsrTemplate>,
    sensor: BeatSensor,
    pub detector: Detector,
    pub counters: TherapyCounters,
    ff: VecDeque<(f64, f64)>,
    pending: VecDeque<f64>,
    blank_until_ms: f64,
    redetect_pending: bool,
    observation: Option<Observation>,
    pub therapies: Vec<TherapyRecord>,
    pub inhibits: u32,
    outcome: Option<Outcome>,
    final_rhythm: Option<FinalRhythm>,
    pub beats: u64,
}

impl Icd {
    pub fn new(params: IcdParams, template: Option<NsrTemplate>) -> Self {
        let counters = TherapyCounters::with_max(params.max_attempts);
        Self {
            sensor: BeatSensor::new(params.sensing),
            detector: Detector::new(params.detection.clone()),
            params,
            template,
            counters,
            ff: VecDeque::new(),
            pending: VecDeque::new(),
            blank_until_ms: f64::NEG_INFINITY,
            redetect_pending: false,
            observation: None,
            therapies: Vec::new(),
            inhibits: 0,
            outcome: None,
            final_rhythm: None,
            beats: 0,
        }
    }

    pub fn params(&self) -> &IcdParams {
        &self.params
    }

    /// True once the episode has reached a final outcome.
    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    /// Processes one sample. Returns a therapy to deliver, if one was
    /// prescribed on this sample.
    pub fn on_sample(&mut self, t_ms: f64, nf_mv: f64, ff_mv: f64, log: &mut Vec<Event>) -> Result<Option<Delivery>> {
        if self.is_done() {
            return Ok(None);
        }
        if !ff_mv.is_finite() {
            return Err(Error::NonFiniteSample { channel: "ff_mV", index: self.ff.len() });
        }
        let (_, len) = window_shape(1.0);
        self.ff.push_back((t_ms, ff_mv));
        while self.ff.len() > len + 1 {
            self.ff.pop_front();
        }
        if t_ms < self.blank_until_ms {
            return Ok(None);
        }
        if std::mem::take(&mut self.redetect_pending) {
            log.push(Event { t_ms, kind: EventKind::Redetection });
        }
        if let Some(beat) = self.sensor.push(t_ms, nf_mv)? {
            self.pending.push_back(beat.t_ms);
        }
        while let Some(&m) = self.pending.front() {
            if m + WINDOW_POST_MS > t_ms {
                break;
            }
            self.pending.pop_front();
            if let Some(d) = self.on_beat(m, t_ms, log)? {
                return Ok(Some(d));
            }
            if self.is_done() {
                break;
            }
        }
        Ok(None)
    }

    fn morphology(&self, marker_ms: f64) -> f64 {
        let Some(template) = &self.template else { return 0.0 };
        let start = marker_ms - WINDOW_PRE_MS;
        let Some(k) = self.ff.iter().position(|&(t, _)| (t - start).abs() < 0.5) else { return 0.0 };
        let window: Vec<f64> = self.ff.iter().skip(k).take(template.len()).map(|&(_, v)| v).collect();
        vtc_score(&window, template).unwrap_or(0.0)
    }

    fn on_beat(&mut self, m: f64, now: f64, log: &mut Vec<Event>) -> Result<Option<Delivery>> {
        self.beats += 1;
        let vtc = self.morphology(m);
        let period = self.detector.window.last_beat_t_ms.map(|prev| m - prev);
        log.push(Event { t_ms: m, kind: EventKind::Sense { period_ms: period, vtc } });
        let (events, sustained) = self.detector.on_beat(m, vtc);
        for e in events {
            let kind = match e {
                DetectorEvent::ZoneEntry { zone } => EventKind::ZoneEntry { zone },
                DetectorEvent::ZoneExit { zone } => EventKind::ZoneExit { zone },
                DetectorEvent::Sustained { zone, t_zone_ms } => {
                    EventKind::Sustained { zone, t_zone_ms, mode: self.detector.mode }
                }
            };
            log.push(Event { t_ms: m, kind });
        }

        if let (Some(obs), Some(period)) = (self.observation.as_mut(), period) {
            if sustained.is_none() && m - obs.start_ms <= self.params.termination.observation_ms {
                obs.slow_run = if period >= self.params.detection.th_ms[ZoneId::Vt1] { obs.slow_run + 1 } else { 0 };
                if obs.slow_run >= self.params.termination.slow_beats {
                    log.push(Event { t_ms: m, kind: EventKind::Terminated });
                    self.finish(Outcome::TerminatedAfterKTherapies, FinalRhythm::Nsr, m, log);
                    return Ok(None);
                }
            }
        }

        let Some(zone) = sustained else { return Ok(None) };
        self.observation = None;
        if self.therapies.last().is_some_and(|r| r.kind == TherapyKind::Shock) {
            // Shock was the last option; re-detection after it ends the run.
            self.finish(Outcome::TherapyExhausted, FinalRhythm::Tachycardia(zone), m, log);
            return Ok(None);
        }
        let p = &self.params;
        let (decision, next) = prescribe(zone, &self.detector.window, &self.counters, &p.detection);
        let delivery = match decision.kind {
            TherapyKind::Inhibit => {
                self.inhibits += 1;
                log.push(Event {
                    t_ms: now,
                    kind: EventKind::Therapy {
                        zone,
                        kind: TherapyKind::Inhibit,
                        scheme: None,
                        pulses: None,
                        avg_vperiod_ms: None,
                        shock_onset_ms: None,
                    },
                });
                // Duration restarts; the window is kept.
                self.detector.zones = Default::default();
                return Ok(None);
            }
            TherapyKind::Atp | TherapyKind::QcAtp => {
                let scheme = select_scheme(zone, self.counters.tcount[zone], self.counters.max_t[zone])?;
                let zp = p.atp.for_zone(zone).ok_or_else(|| Error::Config(format!("no ATP programmed for {zone}")))?;
                let sched = schedule_atp(scheme, &decision, zp, &p.delivery)?;
                if sched.pulse_times_ms.first().is_some_and(|&t0| t0 <= now) {
                    return Err(Error::Config(format!(
                        "ATP coupling interval puts the first pulse before the decision at {now} ms"
                    )));
                }
                log.push(Event {
                    t_ms: now,
                    kind: EventKind::Therapy {
                        zone,
                        kind: decision.kind,
                        scheme: Some(scheme),
                        pulses: Some(sched.pulse_times_ms.clone()),
                        avg_vperiod_ms: decision.avg_vperiod_ms,
                        shock_onset_ms: None,
                    },
                });
                self.therapies.push(TherapyRecord {
                    t_ms: now,
                    zone,
                    kind: decision.kind,
                    scheme: Some(scheme),
                    avg_vperiod_ms: decision.avg_vperiod_ms,
                    n_pulses: sched.pulse_times_ms.len(),
                    onset_ms: sched.pulse_times_ms[0],
                    end_ms: sched.end_ms(),
                });
                Delivery::Atp(sched)
            }
            TherapyKind::Shock => {
                let spec = schedule_shock(now, &p.delivery);
                log.push(Event {
                    t_ms: now,
                    kind: EventKind::Therapy {
                        zone,
                        kind: TherapyKind::Shock,
                        scheme: None,
                        pulses: None,
                        avg_vperiod_ms: None,
                        shock_onset_ms: Some(spec.onset_ms),
                    },
                });
                self.therapies.push(TherapyRecord {
                    t_ms: now,
                    zone,
                    kind: TherapyKind::Shock,
                    scheme: None,
                    avg_vperiod_ms: None,
                    n_pulses: 1,
                    onset_ms: spec.onset_ms,
                    end_ms: spec.onset_ms + spec.duration_ms,
                });
                Delivery::Shock(spec)
            }
        };
        self.counters = next;
        self.counters.initial = false;
        self.blank_until_ms = delivery.end_ms() + self.params.post_therapy_blank_ms;
        self.detector.enter_redetection();
        self.sensor.reset();
        self.pending.clear();
        self.observation = Some(Observation { start_ms: self.blank_until_ms, slow_run: 0 });
        self.redetect_pending = true;
        Ok(Some(delivery))
    }

    fn finish(&mut self, outcome: Outcome, rhythm: FinalRhythm, t_ms: f64, log: &mut Vec<Event>) {
        self.outcome = Some(outcome);
        self.final_rhythm = Some(rhythm);
        log.push(Event { t_ms, kind: EventKind::Outcome { outcome, therapies: self.therapies.len() as u32 } });
    }

    /// Closes the episode at the end of the run if no outcome was reached.
    pub fn close(&mut self, t_ms: f64, log: &mut Vec<Event>) -> (Outcome, FinalRhythm) {
        if self.outcome.is_none() {
            let (outcome, rhythm) = if !self.therapies.is_empty() {
                (Outcome::TerminatedAfterKTherapies, FinalRhythm::Unresolved)
            } else if self.inhibits > 0 {
                (Outcome::Inhibited, FinalRhythm::Nsr)
            } else {
                (Outcome::NoTherapyNeeded, FinalRhythm::Nsr)
            };
            self.finish(outcome, rhythm, t_ms, log);
        }
        (self.outcome.expect("set above"), self.final_rhythm.expect("set with outcome"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule() -> TerminationParams {
        TerminationParams::default()
    }

    #[test]
    fn steady_slow_rhythm_terminates() {
        let p = DetectionParams::default();
        assert_eq!(classify_termination(&[800.0; 12], &p, &rule()), TerminationStatus::Terminated);
        assert_eq!(classify_termination(&[800.0; 9], &p, &rule()), TerminationStatus::Ongoing);
    }

    #[test]
    fn resumed_tachycardia_is_ongoing() {
        let p = DetectionParams::default();
        assert_eq!(classify_termination(&[330.0; 30], &p, &rule()), TerminationStatus::Ongoing);
        let alternating: Vec<f64> = (0..20).map(|k| if k % 2 == 0 { 800.0 } else { 300.0 }).collect();
        assert_eq!(classify_termination(&alternating, &p, &rule()), TerminationStatus::Ongoing);
    }

    #[test]
    fn slow_run_must_fit_in_window() {
        let p = DetectionParams::default();
        // Ten 1100 ms periods take 11 s, past the 10 s window.
        assert_eq!(classify_termination(&[1100.0; 10], &p, &rule()), TerminationStatus::Ongoing);
        let mut late = vec![330.0; 5];
        late.extend([800.0; 10]);
        assert_eq!(classify_termination(&late, &p, &rule()), TerminationStatus::Terminated);
    }

    /// Unit square pulses on both channels every `cl` ms.
    fn feed(icd: &mut Icd, cl: f64, from: f64, to: f64, log: &mut Vec<Event>) -> Vec<(f64, Delivery)> {
        let mut out = Vec::new();
        let mut t = from;
        while t < to {
            let phase = (t - from) % cl;
            let v = if phase < 10.0 { 5.0 } else { 0.0 };
            if let Some(d) = icd.on_sample(t, v, v, log).unwrap() {
                out.push((t, d));
            }
            t += 1.0;
        }
        out
    }

    #[test]
    fn fast_train_gets_burst_then_ramp_then_shock() {
        let mut params = IcdParams::default();
        params.delivery.shock_delay_ms = 0.0;
        let mut icd = Icd::new(params, None);
        let mut log = Vec::new();
        let d = feed(&mut icd, 330.0, 0.0, 60_000.0, &mut log);
        let kinds: Vec<_> = icd.therapies.iter().map(|r| (r.kind, r.scheme)).collect();
        assert_eq!(
            kinds,
            vec![
                (TherapyKind::Atp, Some(AtpScheme::Burst)),
                (TherapyKind::Atp, Some(AtpScheme::Ramp)),
                (TherapyKind::Shock, None)
            ]
        );
        assert_eq!(d.len(), 3);
        assert!(icd.is_done());
        assert!(matches!(log.last().unwrap().kind, EventKind::Outcome { outcome: Outcome::TherapyExhausted, .. }));
        // The pulse at t = 0 has no sub-threshold sample before it, so
        // markers start at 330. The window warms on the 11th marker, where
        // VT is entered; 8 more periods (2640 ms) pass the 2500 ms clock.
        let first = &icd.therapies[0];
        assert_eq!(first.zone, ZoneId::Vt);
        assert_eq!(first.t_ms, 19.0 * 330.0 + 120.0);
        for w in log.windows(2) {
            assert!(w[1].t_ms >= w[0].t_ms || matches!(w[1].kind, EventKind::Sense { .. }));
        }
    }

    #[test]
    fn nsr_needs_no_therapy() {
        let mut icd = Icd::new(IcdParams::default(), None);
        let mut log = Vec::new();
        assert!(feed(&mut icd, 800.0, 0.0, 20_000.0, &mut log).is_empty());
        assert_eq!(icd.close(20_000.0, &mut log), (Outcome::NoTherapyNeeded, FinalRhythm::Nsr));
        assert!(log.iter().all(|e| matches!(e.kind, EventKind::Sense { .. } | EventKind::Outcome { .. })));
    }

    #[test]
    fn correlated_initial_episode_is_inhibited() {
        let template = NsrTemplate::from_window(1.0, (0..201).map(|k| if (80..90).contains(&k) { 5.0 } else { 0.0 }).collect());
        let mut icd = Icd::new(IcdParams::default(), Some(template));
        let mut log = Vec::new();
        assert!(feed(&mut icd, 400.0, 0.0, 15_000.0, &mut log).is_empty());
        assert!(icd.inhibits > 0);
        assert_eq!(icd.close(15_000.0, &mut log).0, Outcome::Inhibited);
    }
}
