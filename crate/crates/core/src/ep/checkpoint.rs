//! Versioned snapshots of the tissue state.
//!
//! A checkpoint carries the unpadded `vm` and `h` fields, the step counter
//! and the hash of the solver configuration it was taken under. Restoring
//! into a solver with a different hash is refused. JSON floats are written
//! shortest-round-trip, so a save/load cycle is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::solver::{Simulation, TissueState};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub t_ms: f64,
    pub steps: u64,
    pub dt_ms: f64,
    pub nx: usize,
    pub ny: usize,
    pub vm: Vec<f64>,
    pub h: Vec<f64>,
    /// The solver is deterministic and draws no random numbers; kept so the
    /// container can carry generator state if a stochastic stimulus source
    /// is ever attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_state: Option<Vec<u8>>,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn capture(sim: &Simulation, state: &TissueState) -> Self {
        let (nx, ny) = state.dims();
        Self {
            version: CHECKPOINT_VERSION,
            t_ms: state.t_ms(),
            steps: state.steps(),
            dt_ms: state.dt_ms(),
            nx,
            ny,
            vm: state.vm_field(),
            h: state.h_field(),
            rng_state: None,
            config_hash: sim.config_hash().to_owned(),
        }
    }

    /// Rebuilds the tissue state, checking it belongs to `sim`.
    pub fn restore(&self, sim: &Simulation) -> Result<TissueState> {
        self.restore_unchecked_hash(sim).and_then(|state| {
            if self.config_hash != sim.config_hash() {
                return Err(Error::Checkpoint(format!(
                    "config hash {} does not match solver {}",
                    self.config_hash,
                    sim.config_hash()
                )));
            }
            Ok(state)
        })
    }

    /// Restores into a solver whose conductivity field may differ from the
    /// one the snapshot was taken under (same lattice and time step).
    pub fn restore_unchecked_hash(&self, sim: &Simulation) -> Result<TissueState> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let grid = sim.grid();
        if (self.nx, self.ny) != (grid.nx, grid.ny) {
            return Err(Error::Checkpoint(format!(
                "grid {}×{} does not match solver {}×{}",
                self.nx, self.ny, grid.nx, grid.ny
            )));
        }
        if self.dt_ms != sim.dt_ms() {
            return Err(Error::Checkpoint(format!(
                "time step {} does not match solver {}",
                self.dt_ms,
                sim.dt_ms()
            )));
        }
        if self.h.iter().any(|h| !(0.0..=1.0).contains(h)) || self.vm.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Checkpoint("fields out of range".into()));
        }
        TissueState::from_fields(self.nx, self.ny, self.dt_ms, self.steps, &self.vm, &self.h)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}
