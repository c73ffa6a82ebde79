use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite {channel} sample at index {index}")]
    NonFiniteSample { channel: &'static str, index: usize },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("insufficient NSR data: {found} beats sensed, at least {required} required")]
    InsufficientNsrData { found: usize, required: usize },

    #[error("morphology window has {window} samples, template has {template}")]
    LengthMismatch { window: usize, template: usize },

    #[error("no {zone} therapy scheme exists for attempt {attempt} (max {max})")]
    AttemptBeyondMax { zone: String, attempt: u32, max: u32 },

    #[error("average ventricular period must be positive, got {0} ms")]
    NonPositivePeriod(f64),

    #[error("time step {dt_ms} ms exceeds the stability bound {bound_ms} ms")]
    UnstableTimeStep { dt_ms: f64, bound_ms: f64 },

    #[error("target CV {target} mm/ms unreachable: bracket yields [{lo}, {hi}] mm/ms")]
    TuningUnreachable { target: f64, lo: f64, hi: f64 },

    #[error("no propagation on the tuning strip")]
    NoPropagation,

    #[error("induction failed: {reason}")]
    InductionFailed {
        reason: String,
        /// Activation times (ms) per node, NaN where never activated.
        activation_map: Vec<f64>,
        nx: usize,
        ny: usize,
    },

    #[error("electrode `{name}` is {distance_mm:.4} mm from a grid node, minimum clearance {min_mm:.4} mm")]
    ElectrodeClearance { name: String, distance_mm: f64, min_mm: f64 },

    #[error("sample cadence gap: expected t = {expected_ms} ms, got {found_ms} ms")]
    CadenceGap { expected_ms: f64, found_ms: f64 },

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("simulation became unstable at t = {t_ms} ms")]
    Unstable { t_ms: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
