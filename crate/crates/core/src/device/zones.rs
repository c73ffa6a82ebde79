//! Rate zones, per-zone containers and detection parameters.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tachy-arrhythmia rate zone. Variants are declared in severity order, so
/// the derived `Ord` ranks VT1 < VT < VF1 < VF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ZoneId {
    #[serde(rename = "VT1")]
    Vt1,
    #[serde(rename = "VT")]
    Vt,
    #[serde(rename = "VF1")]
    Vf1,
    #[serde(rename = "VF")]
    Vf,
}

impl ZoneId {
    pub const ALL: [ZoneId; 4] = [ZoneId::Vt1, ZoneId::Vt, ZoneId::Vf1, ZoneId::Vf];

    pub fn as_str(self) -> &'static str {
        match self {
            ZoneId::Vt1 => "VT1",
            ZoneId::Vt => "VT",
            ZoneId::Vf1 => "VF1",
            ZoneId::Vf => "VF",
        }
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per zone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerZone<T> {
    #[serde(rename = "VT1")]
    pub vt1: T,
    #[serde(rename = "VT")]
    pub vt: T,
    #[serde(rename = "VF1")]
    pub vf1: T,
    #[serde(rename = "VF")]
    pub vf: T,
}

impl<T> PerZone<T> {
    pub const fn new(vt1: T, vt: T, vf1: T, vf: T) -> Self {
        Self { vt1, vt, vf1, vf }
    }

    pub fn from_fn(mut f: impl FnMut(ZoneId) -> T) -> Self {
        Self { vt1: f(ZoneId::Vt1), vt: f(ZoneId::Vt), vf1: f(ZoneId::Vf1), vf: f(ZoneId::Vf) }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ZoneId, &T)> {
        ZoneId::ALL.into_iter().map(move |z| (z, &self[z]))
    }
}

impl<T: Clone> PerZone<T> {
    pub fn splat(v: T) -> Self {
        Self { vt1: v.clone(), vt: v.clone(), vf1: v.clone(), vf: v }
    }
}

impl<T> Index<ZoneId> for PerZone<T> {
    type Output = T;
    fn index(&self, z: ZoneId) -> &T {
        match z {
            ZoneId::Vt1 => &self.vt1,
            ZoneId::Vt => &self.vt,
            ZoneId::Vf1 => &self.vf1,
            ZoneId::Vf => &self.vf,
        }
    }
}

impl<T> IndexMut<ZoneId> for PerZone<T> {
    fn index_mut(&mut self, z: ZoneId) -> &mut T {
        match z {
            ZoneId::Vt1 => &mut self.vt1,
            ZoneId::Vt => &mut self.vt,
            ZoneId::Vf1 => &mut self.vf1,
            ZoneId::Vf => &mut self.vf,
        }
    }
}

/// Detection state of one zone: whether it has been entered, and the time
/// accumulated in it since entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZoneState {
    pub in_zone: bool,
    pub t_zone_ms: f64,
}

impl ZoneState {
    pub const IDLE: ZoneState = ZoneState { in_zone: false, t_zone_ms: 0.0 };
}

/// Which duration threshold applies: the first detection of an episode or
/// re-detection after a therapy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    #[default]
    Initial,
    Redetection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionParams {
    /// Rate thresholds: a period shorter than this is fast for the zone.
    pub th_ms: PerZone<f64>,
    pub dur_ms: PerZone<f64>,
    pub redetect_dur_ms: PerZone<f64>,
    pub vtc_threshold: f64,
    /// Most correlated beats (out of 10) for which initial ATP is still allowed.
    pub corr_count_max: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            th_ms: PerZone::new(429.0, 353.0, 300.0, 240.0),
            dur_ms: PerZone::new(2500.0, 2500.0, 1000.0, 1000.0),
            redetect_dur_ms: PerZone::splat(1000.0),
            vtc_threshold: 0.94,
            corr_count_max: 3,
        }
    }
}

impl DetectionParams {
    pub fn duration(&self, zone: ZoneId, mode: DetectionMode) -> f64 {
        match mode {
            DetectionMode::Initial => self.dur_ms[zone],
            DetectionMode::Redetection => self.redetect_dur_ms[zone],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let th = &self.th_ms;
        if !(th.vf > 0.0 && th.vf < th.vf1 && th.vf1 < th.vt && th.vt < th.vt1 && th.vt1.is_finite()) {
            return Err(Error::Config(
                "detection thresholds must satisfy 0 < VF < VF1 < VT < VT1".into(),
            ));
        }
        for (z, d) in self.dur_ms.iter().chain(self.redetect_dur_ms.iter()) {
            if !(d.is_finite() && *d > 0.0) {
                return Err(Error::Config(format!("{z} duration threshold must be positive")));
            }
        }
        if !(-1.0..=1.0).contains(&self.vtc_threshold) {
            return Err(Error::Config("vtc_threshold must lie in [-1, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn severity_order() {
        assert!(ZoneId::Vt1 < ZoneId::Vt && ZoneId::Vt < ZoneId::Vf1 && ZoneId::Vf1 < ZoneId::Vf);
        assert_eq!(ZoneId::ALL.iter().max(), Some(&ZoneId::Vf));
    }

    #[test]
    fn per_zone_serializes_with_zone_names() {
        let p = PerZone::new(1, 2, 3, 4);
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"VT1":1,"VT":2,"VF1":3,"VF":4}"#);
        assert!(serde_json::from_str::<PerZone<i32>>(r#"{"VT1":1,"VT":2,"VF1":3,"VF":4,"X":5}"#).is_err());
    }

    #[test]
    fn default_thresholds_are_ordered() {
        DetectionParams::default().validate().unwrap();
        let mut p = DetectionParams::default();
        p.th_ms.vf = 310.0;
        assert!(p.validate().is_err());
    }
}
