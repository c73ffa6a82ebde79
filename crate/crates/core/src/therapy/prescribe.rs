//! Therapy prescription for a sustained episode.

use serde::{Deserialize, Serialize};

use crate::device::{DetectionParams, DetectionWindow, PerZone, ZoneId, WINDOW_LEN};

/// Number of most recent periods averaged for ATP timing.
pub const AVG_PERIODS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TherapyKind {
    #[serde(rename = "ATP")]
    Atp,
    #[serde(rename = "QCATP")]
    QcAtp,
    Shock,
    Inhibit,
}

impl TherapyKind {
    pub fn is_atp(self) -> bool {
        matches!(self, TherapyKind::Atp | TherapyKind::QcAtp)
    }
}

/// Attempts used and allowed per zone, plus whether the episode has been
/// treated yet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TherapyCounters {
    pub tcount: PerZone<u32>,
    pub max_t: PerZone<u32>,
    pub initial: bool,
}

/// Default attempt limits: two ATP rounds in either VT zone, one QC ATP in
/// VF1, none in VF.
pub const DEFAULT_MAX_ATTEMPTS: PerZone<u32> = PerZone::new(2, 2, 1, 0);

impl Default for TherapyCounters {
    fn default() -> Self {
        Self::with_max(DEFAULT_MAX_ATTEMPTS)
    }
}

impl TherapyCounters {
    pub fn with_max(max_t: PerZone<u32>) -> Self {
        Self { tcount: PerZone::splat(0), max_t, initial: true }
    }

    pub fn attempts_left(&self, zone: ZoneId) -> bool {
        self.tcount[zone] < self.max_t[zone]
    }

    /// Start of a new episode: nothing used, initial detection again.
    pub fn reset(&mut self) {
        self.tcount = PerZone::splat(0);
        self.initial = true;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TherapyDecision {
    pub zone: ZoneId,
    pub kind: TherapyKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_vperiod_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_time_ms: Option<f64>,
}

/// Mean of the last four periods of a warm window.
pub fn avg_vperiod(window: &DetectionWindow) -> Option<f64> {
    (window.periods.len() == WINDOW_LEN)
        .then(|| window.periods.iter().skip(WINDOW_LEN - AVG_PERIODS).sum::<f64>() / AVG_PERIODS as f64)
}

/// Number of morphology scores above the correlation threshold.
pub fn corr_count(window: &DetectionWindow, p: &DetectionParams) -> usize {
    window.vtcs.iter().filter(|&&s| s > p.vtc_threshold).count()
}

/// Decides the therapy for `zone`, which was flagged sustained on the last
/// beat of `window`. Only ATP and QC ATP consume an attempt.
pub fn prescribe(
    zone: ZoneId,
    window: &DetectionWindow,
    counters: &TherapyCounters,
    p: &DetectionParams,
) -> (TherapyDecision, TherapyCounters) {
    let mut next = *counters;
    let timed = |kind| TherapyDecision {
        zone,
        kind,
        avg_vperiod_ms: avg_vperiod(window),
        v_time_ms: window.last_beat_t_ms,
    };
    let bare = |kind| TherapyDecision { zone, kind, avg_vperiod_ms: None, v_time_ms: None };

    let decision = match zone {
        ZoneId::Vf1 if counters.attempts_left(ZoneId::Vf1) => {
            next.tcount[zone] += 1;
            timed(TherapyKind::QcAtp)
        }
        ZoneId::Vt | ZoneId::Vt1 if counters.attempts_left(zone) => {
            if !counters.initial || corr_count(window, p) <= p.corr_count_max {
                next.tcount[zone] += 1;
                timed(TherapyKind::Atp)
            } else {
                bare(TherapyKind::Inhibit)
            }
        }
        _ => bare(TherapyKind::Shock),
    };
    (decision, next)
}
