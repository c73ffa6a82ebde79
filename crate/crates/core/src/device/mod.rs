//! Rate-zone detection logic of the virtual device.

mod detector;
mod zones;

pub use detector::{
    step_detector, update_zone, DetectionWindow, Detector, DetectorEvent, ENTRY_COUNT, PERSIST_COUNT, WINDOW_LEN,
};
pub use zones::{DetectionMode, DetectionParams, PerZone, ZoneId, ZoneState};
