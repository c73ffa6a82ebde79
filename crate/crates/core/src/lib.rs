pub mod device;
pub mod egm;
pub mod ep;
pub mod error;
pub mod orchestrator;
pub mod sensing;
pub mod therapy;

pub use error::{Error, Result};
