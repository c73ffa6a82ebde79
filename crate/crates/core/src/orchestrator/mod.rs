//! Closed-loop co-simulation of the device and the tissue model.

pub mod closed_loop;
pub mod icd;
pub mod scenario;

pub use closed_loop::{prepare, replay_open_loop, run_closed_loop, run_prepared, ClosedLoopRun, EpisodeReport, Prepared};
pub use icd::{classify_termination, Delivery, Event, EventKind, FinalRhythm, Icd, Outcome, TerminationStatus, TherapyRecord};
pub use scenario::{
    Direction, EgmParams, EpisodeSpec, IcdParams, LoopParams, Patient, Scenario, ScarSpec, TerminationParams, TissueSpec,
};
