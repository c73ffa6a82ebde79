//! Desk-scale monodomain tissue model.

pub mod checkpoint;
pub mod grid;
pub mod ionic;
pub mod reentry;
pub mod solver;
pub mod tuning;

pub use checkpoint::Checkpoint;
pub use grid::{ScarGeometry, TissueGrid};
pub use ionic::{init_limit_cycle, ionic_step, IonicParams};
pub use reentry::{induce_reentry, InductionProtocol, InductionReport};
pub use solver::{Probe, Simulation, StimSite, Stimulus, StimulusSchedule, TissueState};
pub use tuning::{measure_cv, tune_conductivity};
