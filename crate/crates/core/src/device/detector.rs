//! Per-zone sustained-episode detection over a moving 10-beat window.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::zones::{DetectionMode, DetectionParams, PerZone, ZoneId, ZoneState};

/// Number of periods (and morphology scores) the window holds.
pub const WINDOW_LEN: usize = 10;
/// Fast periods needed to enter a zone.
pub const ENTRY_COUNT: usize = 8;
/// Fast periods needed to keep the zone clock running.
pub const PERSIST_COUNT: usize = 6;

/// The latest ventricular periods and VTC scores.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionWindow {
    pub periods: VecDeque<f64>,
    pub vtcs: VecDeque<f64>,
    pub last_beat_t_ms: Option<f64>,
}

impl DetectionWindow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Window pre-filled with `periods` (the last `WINDOW_LEN` are kept).
    pub fn from_periods(periods: &[f64]) -> Self {
        let mut w = Self::new();
        for &p in periods {
            w.push_period(p);
        }
        w
    }

    pub fn push_period(&mut self, period_ms: f64) {
        if self.periods.len() == WINDOW_LEN {
            self.periods.pop_front();
        }
        self.periods.push_back(period_ms);
    }

    pub fn push_vtc(&mut self, score: f64) {
        if self.vtcs.len() == WINDOW_LEN {
            self.vtcs.pop_front();
        }
        self.vtcs.push_back(score);
    }

    /// Records a sensed beat; the period to the previous beat (if any) joins
    /// the window.
    pub fn push_beat(&mut self, t_ms: f64, vtc: f64) {
        if let Some(prev) = self.last_beat_t_ms {
            self.push_period(t_ms - prev);
        }
        self.last_beat_t_ms = Some(t_ms);
        self.push_vtc(vtc);
    }

    pub fn is_warm(&self) -> bool {
        self.periods.len() == WINDOW_LEN
    }

    pub fn last_period(&self) -> Option<f64> {
        self.periods.back().copied()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

/// Advances one zone by one beat. Returns the new state and whether the
/// (updated) zone clock has reached the duration threshold. A cold window
/// leaves the state untouched.
pub fn update_zone(
    state: ZoneState,
    window: &DetectionWindow,
    zone: ZoneId,
    p: &DetectionParams,
    mode: DetectionMode,
) -> (ZoneState, bool) {
    if !window.is_warm() {
        return (state, false);
    }
    let th = p.th_ms[zone];
    let fast_count = window.periods.iter().filter(|&&v| v < th).count();
    let last = window.periods[WINDOW_LEN - 1];
    let last_fast = last < th;

    let mut next = state;
    if fast_count >= ENTRY_COUNT && last_fast {
        next.in_zone = true;
    }
    // The clock looks at the state before this beat's entry check.
    if state.in_zone {
        if fast_count >= PERSIST_COUNT && last_fast {
            next.t_zone_ms = state.t_zone_ms + last;
        } else {
            next = ZoneState::IDLE;
        }
    }
    let sustained = next.t_zone_ms >= p.duration(zone, mode);
    (next, sustained)
}

/// Runs [`update_zone`] for every zone and returns the most severe zone that
/// became sustained on this beat.
pub fn step_detector(
    zones: &PerZone<ZoneState>,
    window: &DetectionWindow,
    p: &DetectionParams,
    mode: DetectionMode,
) -> (PerZone<ZoneState>, Option<ZoneId>) {
    let mut next = *zones;
    let mut sustained = None;
    for z in ZoneId::ALL {
        let (s, flag) = update_zone(zones[z], window, z, p, mode);
        next[z] = s;
        if flag {
            sustained = Some(z);
        }
    }
    (next, sustained)
}

/// Zone transitions observed on one beat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DetectorEvent {
    ZoneEntry { zone: ZoneId },
    ZoneExit { zone: ZoneId },
    Sustained { zone: ZoneId, t_zone_ms: f64 },
}

/// Detector state for one episode: zone states, the beat window and the
/// detection mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub params: DetectionParams,
    pub zones: PerZone<ZoneState>,
    pub window: DetectionWindow,
    pub mode: DetectionMode,
}

impl Detector {
    pub fn new(params: DetectionParams) -> Self {
        Self { params, ..Default::default() }
    }

    /// Adds a beat and updates the zones. Returns the transitions and the
    /// sustained zone, if any.
    pub fn on_beat(&mut self, t_ms: f64, vtc: f64) -> (Vec<DetectorEvent>, Option<ZoneId>) {
        self.window.push_beat(t_ms, vtc);
        let (next, sustained) = step_detector(&self.zones, &self.window, &self.params, self.mode);
        let mut events = Vec::new();
        for z in ZoneId::ALL {
            match (self.zones[z].in_zone, next[z].in_zone) {
                (false, true) => events.push(DetectorEvent::ZoneEntry { zone: z }),
                (true, false) => events.push(DetectorEvent::ZoneExit { zone: z }),
                _ => {}
            }
        }
        if let Some(z) = sustained {
            events.push(DetectorEvent::Sustained { zone: z, t_zone_ms: next[z].t_zone_ms });
        }
        self.zones = next;
        (events, sustained)
    }

    /// Clears the window and zone clocks and switches to re-detection.
    pub fn enter_redetection(&mut self) {
        self.window.clear();
        self.zones = PerZone::splat(ZoneState::IDLE);
        self.mode = DetectionMode::Redetection;
    }

    /// Back to a fresh initial detection (new episode).
    pub fn reset_episode(&mut self) {
        self.window.clear();
        self.zones = PerZone::splat(ZoneState::IDLE);
        self.mode = DetectionMode::Initial;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(periods: &[f64]) -> DetectionWindow {
        DetectionWindow::from_periods(periods)
    }

    #[test]
    fn slow_rhythm_never_enters() {
        let p = DetectionParams::default();
        let (s, sus) = update_zone(ZoneState::IDLE, &window(&[800.0; 10]), ZoneId::Vt1, &p, DetectionMode::Initial);
        assert_eq!(s, ZoneState::IDLE);
        assert!(!sus);
    }

    #[test]
    fn eight_fast_periods_enter_without_clock() {
        let p = DetectionParams::default();
        let mut periods = vec![800.0, 800.0];
        periods.extend([300.0; 8]);
        let (s, sus) = update_zone(ZoneState::IDLE, &window(&periods), ZoneId::Vt, &p, DetectionMode::Initial);
        assert_eq!(s, ZoneState { in_zone: true, t_zone_ms: 0.0 });
        assert!(!sus);
    }

    #[test]
    fn entry_requires_fast_last_period() {
        let p = DetectionParams::default();
        let mut periods = vec![300.0; 9];
        periods.push(800.0);
        let (s, _) = update_zone(ZoneState::IDLE, &window(&periods), ZoneId::Vt, &p, DetectionMode::Initial);
        assert!(!s.in_zone);
    }

    #[test]
    fn sustained_on_ninth_beat_after_entry() {
        let p = DetectionParams::default();
        let mut d = Detector::new(p);
        let mut t = 0.0;
        for _ in 0..3 {
            d.on_beat(t, 0.0);
            t += 800.0;
        }
        let mut entry_beat = None;
        let mut sustained_beat = None;
        for k in 0..40 {
            t += 300.0;
            let (ev, sus) = d.on_beat(t, 0.0);
            if ev.contains(&DetectorEvent::ZoneEntry { zone: ZoneId::Vt }) {
                entry_beat = Some(k);
            }
            if sus == Some(ZoneId::Vt) && sustained_beat.is_none() {
                sustained_beat = Some(k);
                assert_eq!(d.zones.vt.t_zone_ms, 2700.0);
            }
        }
        assert_eq!(sustained_beat.unwrap() - entry_beat.unwrap(), 9);
    }

    #[test]
    fn reset_when_fewer_than_six_fast() {
        let p = DetectionParams::default();
        let s = ZoneState { in_zone: true, t_zone_ms: 1200.0 };
        let mut periods = vec![800.0; 5];
        periods.extend([300.0; 5]);
        let (n, _) = update_zone(s, &window(&periods), ZoneId::Vt, &p, DetectionMode::Initial);
        assert_eq!(n, ZoneState::IDLE);
    }

    #[test]
    fn most_severe_zone_wins() {
        let p = DetectionParams::default();
        let zones = PerZone::splat(ZoneState { in_zone: true, t_zone_ms: 2400.0 });
        let (_, z) = step_detector(&zones, &window(&[250.0; 10]), &p, DetectionMode::Initial);
        assert_eq!(z, Some(ZoneId::Vf1));
    }

    #[test]
    fn redetection_uses_short_duration() {
        let p = DetectionParams::default();
        let s = ZoneState { in_zone: true, t_zone_ms: 700.0 };
        let w = window(&[400.0; 10]);
        assert!(!update_zone(s, &w, ZoneId::Vt1, &p, DetectionMode::Initial).1);
        assert!(update_zone(s, &w, ZoneId::Vt1, &p, DetectionMode::Redetection).1);
    }

    #[test]
    fn cold_window_is_a_no_op() {
        let p = DetectionParams::default();
        let s = ZoneState { in_zone: true, t_zone_ms: 5000.0 };
        assert_eq!(update_zone(s, &window(&[300.0; 9]), ZoneId::Vt, &p, DetectionMode::Initial), (s, false));
    }
}
