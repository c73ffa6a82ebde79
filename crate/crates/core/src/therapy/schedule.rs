//! ATP pulse trains and shock timing.

use serde::{Deserialize, Serialize};

use super::prescribe::TherapyDecision;
use crate::device::ZoneId;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtpScheme {
    Burst,
    Ramp,
    /// Quick-convert: burst timing at the VF1 percentages.
    Qc,
}

/// Scheme for the next attempt in `zone` given the attempts already used.
pub fn select_scheme(zone: ZoneId, tcount_before: u32, max_t: u32) -> Result<AtpScheme> {
    let beyond = || Error::AttemptBeyondMax { zone: zone.to_string(), attempt: tcount_before + 1, max: max_t };
    if tcount_before >= max_t {
        return Err(beyond());
    }
    match (zone, tcount_before) {
        (ZoneId::Vt | ZoneId::Vt1, 0) => Ok(AtpScheme::Burst),
        (ZoneId::Vt | ZoneId::Vt1, 1) => Ok(AtpScheme::Ramp),
        (ZoneId::Vf1, 0) => Ok(AtpScheme::Qc),
        _ => Err(beyond()),
    }
}

/// Programmable ATP parameters of one zone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtpZoneParams {
    pub pulse_interval_pct: f64,
    pub coupling_interval_pct: f64,
    pub n_pulses: usize,
    #[serde(default)]
    pub ramp_decrement_ms: f64,
    #[serde(default = "default_min_interval")]
    pub min_interval_ms: f64,
}

fn default_min_interval() -> f64 {
    MIN_INTERVAL_MS
}

/// Shortest ramp interval.
pub const MIN_INTERVAL_MS: f64 = 220.0;

impl AtpZoneParams {
    pub const fn new(pct: f64, n_pulses: usize, ramp_decrement_ms: f64) -> Self {
        Self {
            pulse_interval_pct: pct,
            coupling_interval_pct: pct,
            n_pulses,
            ramp_decrement_ms,
            min_interval_ms: MIN_INTERVAL_MS,
        }
    }

    /// Nominal VT and VT1 programming.
    pub const NOMINAL_VT: Self = Self::new(81.0, 8, 10.0);
    /// Quick-convert programming of the VF1 zone.
    pub const QC: Self = Self::new(88.0, 8, 0.0);
    /// Adjusted VT programming with a longer train.
    pub const ADJUSTED_LONG: Self = Self::new(88.0, 12, 5.0);
    /// Adjusted VT programming with the nominal train length.
    pub const ADJUSTED_SHORT: Self = Self::new(88.0, 8, 5.0);

    pub fn validate(&self) -> Result<()> {
        let pct_ok = |p: f64| p > 0.0 && p <= 100.0;
        if !(pct_ok(self.pulse_interval_pct) && pct_ok(self.coupling_interval_pct)) {
            return Err(Error::Config("ATP percentages must lie in (0, 100]".into()));
        }
        if self.n_pulses == 0 {
            return Err(Error::Config("ATP needs at least one pulse".into()));
        }
        if !(self.ramp_decrement_ms >= 0.0 && self.min_interval_ms >= 0.0) {
            return Err(Error::Config("ramp decrement and floor must be non-negative".into()));
        }
        Ok(())
    }
}

/// ATP programming for the zones that offer it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtpParams {
    #[serde(rename = "VT1")]
    pub vt1: AtpZoneParams,
    #[serde(rename = "VT")]
    pub vt: AtpZoneParams,
    #[serde(rename = "VF1")]
    pub vf1: AtpZoneParams,
}

impl Default for AtpParams {
    fn default() -> Self {
        Self { vt1: AtpZoneParams::NOMINAL_VT, vt: AtpZoneParams::NOMINAL_VT, vf1: AtpZoneParams::QC }
    }
}

impl AtpParams {
    pub fn for_zone(&self, zone: ZoneId) -> Option<&AtpZoneParams> {
        match zone {
            ZoneId::Vt1 => Some(&self.vt1),
            ZoneId::Vt => Some(&self.vt),
            ZoneId::Vf1 => Some(&self.vf1),
            ZoneId::Vf => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vt1.validate()?;
        self.vt.validate()?;
        self.vf1.validate()
    }
}

/// Stimulus strengths and timing used to deliver therapy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeliveryParams {
    pub atp_pulse_duration_ms: f64,
    /// ATP current at the tip footprint (model units).
    pub atp_amplitude: f64,
    pub shock_delay_ms: f64,
    pub shock_duration_ms: f64,
    /// Field-shock current applied to all tissue (model units).
    pub shock_amplitude: f64,
}

impl Default for DeliveryParams {
    fn default() -> Self {
        Self {
            atp_pulse_duration_ms: 4.0,
            atp_amplitude: 1000.0,
            shock_delay_ms: 2000.0,
            shock_duration_ms: 10.0,
            shock_amplitude: 200.0,
        }
    }
}

impl DeliveryParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(pos(self.atp_pulse_duration_ms) && pos(self.shock_duration_ms)) {
            return Err(Error::Config("stimulus durations must be positive".into()));
        }
        if !(pos(self.atp_amplitude) && pos(self.shock_amplitude)) {
            return Err(Error::Config("stimulus amplitudes must be positive".into()));
        }
        if !(self.shock_delay_ms.is_finite() && self.shock_delay_ms >= 0.0) {
            return Err(Error::Config("shock delay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub pulse_times_ms: Vec<f64>,
    pub pulse_duration_ms: f64,
    pub amplitude: f64,
}

impl PulseSchedule {
    /// End of the last pulse.
    pub fn end_ms(&self) -> f64 {
        self.pulse_times_ms.last().map_or(0.0, |t| t + self.pulse_duration_ms)
    }

    /// Interval sequence starting with the coupling interval.
    pub fn intervals(&self, v_time_ms: f64) -> Vec<f64> {
        let mut prev = v_time_ms;
        self.pulse_times_ms
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }
}

/// Pulse onsets for an ATP decision. The first pulse follows the last
/// sensed beat by the coupling interval; a burst repeats the pulse interval,
/// a ramp shortens each later gap by the decrement down to the floor.
pub fn schedule_atp(
    scheme: AtpScheme,
    decision: &TherapyDecision,
    p: &AtpZoneParams,
    delivery: &DeliveryParams,
) -> Result<PulseSchedule> {
    if !decision.kind.is_atp() {
        return Err(Error::Config(format!("cannot schedule ATP for a {:?} decision", decision.kind)));
    }
    let (Some(avg), Some(v_time)) = (decision.avg_vperiod_ms, decision.v_time_ms) else {
        return Err(Error::Config("ATP decision lacks timing parameters".into()));
    };
    if !(avg > 0.0 && avg.is_finite()) {
        return Err(Error::NonPositivePeriod(avg));
    }
    let coupling = avg * p.coupling_interval_pct / 100.0;
    let interval = avg * p.pulse_interval_pct / 100.0;
    let mut times = Vec::with_capacity(p.n_pulses);
    let mut t = v_time + coupling;
    for k in 0..p.n_pulses {
        if k > 0 {
            let gap = match scheme {
                AtpScheme::Burst | AtpScheme::Qc => interval,
                AtpScheme::Ramp => (interval - k as f64 * p.ramp_decrement_ms).max(p.min_interval_ms),
            };
            t += gap;
        }
        times.push(t);
    }
    Ok(PulseSchedule { pulse_times_ms: times, pulse_duration_ms: delivery.atp_pulse_duration_ms, amplitude: delivery.atp_amplitude })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub amplitude: f64,
}

/// Shock delivered after the charge delay.
pub fn schedule_shock(t_now_ms: f64, delivery: &DeliveryParams) -> ShockSpec {
    ShockSpec {
        onset_ms: t_now_ms + delivery.shock_delay_ms,
        duration_ms: delivery.shock_duration_ms,
        amplitude: delivery.shock_amplitude,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::therapy::TherapyKind;

    fn atp(avg: f64, v: f64) -> TherapyDecision {
        TherapyDecision { zone: ZoneId::Vt, kind: TherapyKind::Atp, avg_vperiod_ms: Some(avg), v_time_ms: Some(v) }
    }

    #[test]
    fn scheme_progression() {
        assert_eq!(select_scheme(ZoneId::Vt, 0, 2).unwrap(), AtpScheme::Burst);
        assert_eq!(select_scheme(ZoneId::Vt1, 1, 2).unwrap(), AtpScheme::Ramp);
        assert_eq!(select_scheme(ZoneId::Vf1, 0, 1).unwrap(), AtpScheme::Qc);
        assert!(matches!(select_scheme(ZoneId::Vt, 2, 2), Err(Error::AttemptBeyondMax { attempt: 3, .. })));
        assert!(select_scheme(ZoneId::Vf1, 1, 1).is_err());
        assert!(select_scheme(ZoneId::Vf, 0, 0).is_err());
    }

    #[test]
    fn nominal_burst() {
        let s = schedule_atp(AtpScheme::Burst, &atp(400.0, 10_000.0), &AtpZoneParams::NOMINAL_VT, &DeliveryParams::default())
            .unwrap();
        let expected: Vec<f64> = (0..8).map(|k| 10_324.0 + 324.0 * k as f64).collect();
        assert_eq!(s.pulse_times_ms, expected);
        assert_eq!(s.pulse_duration_ms, 4.0);
    }

    #[test]
    fn ramp_hits_floor() {
        let p = AtpZoneParams::new(81.0, 15, 10.0);
        let s = schedule_atp(AtpScheme::Ramp, &atp(300.0, 0.0), &p, &DeliveryParams::default()).unwrap();
        let iv = s.intervals(0.0);
        assert_eq!(iv[0], 243.0);
        assert_eq!(iv[1], 233.0);
        assert_eq!(iv[2], 223.0);
        assert!(iv[3..].iter().all(|&g| g == 220.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = DeliveryParams::default();
        assert!(matches!(
            schedule_atp(AtpScheme::Burst, &atp(0.0, 0.0), &AtpZoneParams::NOMINAL_VT, &d),
            Err(Error::NonPositivePeriod(_))
        ));
        let shock = TherapyDecision { zone: ZoneId::Vf, kind: TherapyKind::Shock, avg_vperiod_ms: None, v_time_ms: None };
        assert!(schedule_atp(AtpScheme::Burst, &shock, &AtpZoneParams::NOMINAL_VT, &d).is_err());
    }

    #[test]
    fn shock_timing() {
        let s = schedule_shock(5000.0, &DeliveryParams::default());
        assert_eq!((s.onset_ms, s.duration_ms), (7000.0, 10.0));
        let now = schedule_shock(5000.0, &DeliveryParams { shock_delay_ms: 0.0, ..Default::default() });
        assert_eq!(now.onset_ms, 5000.0);
    }
}
