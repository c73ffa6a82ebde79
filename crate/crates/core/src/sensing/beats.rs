//! Adaptive-threshold beat sensing on the near-field channel.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::trace::EgmTrace;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingParams {
    pub refractory_ms: f64,
    /// Absolute lower bound on the sensing threshold (mV).
    #[serde(rename = "threshold_floor_mV")]
    pub threshold_floor_mv: f64,
    pub adaptive_fraction: f64,
    /// Length of the look-back over which the running peak is taken.
    pub peak_window_ms: f64,
}

/// Near-field NSR peak the lead gain is normalized to (mV).
pub const NOMINAL_NSR_PEAK_MV: f64 = 5.0;

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            refractory_ms: 150.0,
            // 10% of the nominal NSR peak the lead gain is calibrated to.
            threshold_floor_mv: 0.1 * NOMINAL_NSR_PEAK_MV,
            adaptive_fraction: 0.5,
            peak_window_ms: 2000.0,
        }
    }
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.refractory_ms.is_finite() && self.refractory_ms > 0.0) {
            return Err(Error::Config("sensing.refractory_ms must be positive".into()));
        }
        if !(self.adaptive_fraction > 0.0 && self.adaptive_fraction < 1.0) {
            return Err(Error::Config("sensing.adaptive_fraction must lie in (0, 1)".into()));
        }
        if !(self.threshold_floor_mv.is_finite() && self.threshold_floor_mv >= 0.0) {
            return Err(Error::Config("sensing.threshold_floor_mV must be non-negative".into()));
        }
        if !(self.peak_window_ms.is_finite() && self.peak_window_ms > 0.0) {
            return Err(Error::Config("sensing.peak_window_ms must be positive".into()));
        }
        Ok(())
    }
}

/// A sense marker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatEvent {
    pub t_ms: f64,
}

/// Streaming sensor: feed samples in time order, get a marker back on each
/// upward crossing of the adaptive threshold outside the refractory period.
/// The threshold at a sample is `max(floor, fraction × peak |nf|)` over the
/// preceding `peak_window_ms`, the sample itself excluded.
#[derive(Clone, Debug)]
pub struct BeatSensor {
    params: SensingParams,
    /// Candidates for the running maximum, decreasing in magnitude.
    peaks: VecDeque<(f64, f64)>,
    prev: Option<f64>,
    last_beat_ms: Option<f64>,
    n_seen: usize,
}

impl BeatSensor {
    pub fn new(params: SensingParams) -> Self {
        Self { params, peaks: VecDeque::new(), prev: None, last_beat_ms: None, n_seen: 0 }
    }

    pub fn params(&self) -> &SensingParams {
        &self.params
    }

    /// Forgets signal history and the last marker.
    pub fn reset(&mut self) {
        self.peaks.clear();
        self.prev = None;
        self.last_beat_ms = None;
    }

    pub fn threshold(&self) -> f64 {
        let peak = self.peaks.front().map_or(0.0, |p| p.1);
        self.params.threshold_floor_mv.max(self.params.adaptive_fraction * peak)
    }

    pub fn push(&mut self, t_ms: f64, nf_mv: f64) -> Result<Option<BeatEvent>> {
        if !nf_mv.is_finite() {
            return Err(Error::NonFiniteSample { channel: "nf_mV", index: self.n_seen });
        }
        self.n_seen += 1;
        let a = nf_mv.abs();
        let horizon = t_ms - self.params.peak_window_ms;
        while self.peaks.front().is_some_and(|p| p.0 <= horizon) {
            self.peaks.pop_front();
        }
        let thr = self.threshold();
        let crossed = self.prev.is_some_and(|p| p < thr) && a >= thr;
        let clear = self.last_beat_ms.map_or(true, |t| t_ms - t >= self.params.refractory_ms);
        while self.peaks.back().is_some_and(|p| p.1 <= a) {
            self.peaks.pop_back();
        }
        self.peaks.push_back((t_ms, a));
        self.prev = Some(a);
        if crossed && clear {
            self.last_beat_ms = Some(t_ms);
            Ok(Some(BeatEvent { t_ms }))
        } else {
            Ok(None)
        }
    }
}

/// Runs a fresh [`BeatSensor`] over the near-field channel of `trace`.
pub fn detect_beats(trace: &EgmTrace, p: &SensingParams) -> Result<Vec<BeatEvent>> {
    let mut sensor = BeatSensor::new(*p);
    let mut beats = Vec::new();
    for (i, &v) in trace.nf_mv.iter().enumerate() {
        if let Some(b) = sensor.push(trace.time_of(i), v)? {
            beats.push(b);
        }
    }
    Ok(beats)
}

/// Ventricular periods between consecutive markers.
pub fn compute_periods(beats: &[BeatEvent]) -> Vec<f64> {
    beats.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect()
}
