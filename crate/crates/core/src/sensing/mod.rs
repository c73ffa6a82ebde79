//! EGM sensing front-end: beat markers, ventricular periods and morphology
//! scores against a per-patient NSR template.

mod beats;
mod template;
mod trace;

pub use beats::{compute_periods, detect_beats, BeatEvent, BeatSensor, SensingParams, NOMINAL_NSR_PEAK_MV};
pub use template::{
    build_nsr_template, morphology_window, vtc_score, window_shape, NsrTemplate, MIN_TEMPLATE_BEATS,
    WINDOW_POST_MS, WINDOW_PRE_MS,
};
pub use trace::{EgmTrace, DEFAULT_SAMPLE_MS};
