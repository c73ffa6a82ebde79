//! Therapy prescription and ATP/shock scheduling.

mod prescribe;
mod schedule;

pub use prescribe::{
    avg_vperiod, corr_count, prescribe, TherapyCounters, TherapyDecision, TherapyKind, AVG_PERIODS,
    DEFAULT_MAX_ATTEMPTS,
};
pub use schedule::{
    schedule_atp, schedule_shock, select_scheme, AtpParams, AtpScheme, AtpZoneParams, DeliveryParams, PulseSchedule,
    ShockSpec, MIN_INTERVAL_MS,
};
