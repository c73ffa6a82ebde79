use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use icdsim_core::orchestrator::{EgmParams, EpisodeSpec, IcdParams, LoopParams, Patient, Scenario, TissueSpec};

use super::CliError;

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A scenario plus where and how to write the results.
///
/// Fields are listed out rather than flattened from `Scenario` because
/// serde cannot reject unknown keys through a flattened struct.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub patient: Patient,
    pub episode: EpisodeSpec,
    #[serde(default)]
    pub icd: IcdParams,
    pub duration_ms: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tissue: Option<TissueSpec>,
    #[serde(default)]
    pub egm: EgmParams,
    #[serde(default)]
    pub closed_loop: LoopParams,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub plots: bool,
    /// 0 warnings, 1 info, 2 debug, 3 trace.
    #[serde(default)]
    pub verbosity: u8,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.scenario().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            patient: self.patient,
            episode: self.episode.clone(),
            icd: self.icd.clone(),
            duration_ms: self.duration_ms,
            seed: self.seed,
            tissue: self.tissue.clone(),
            egm: self.egm.clone(),
            closed_loop: self.closed_loop,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_key_is_named() {
        let err = serde_json::from_str::<RunConfig>(r#"{"patient": 0, "episode": {"type": "nsr"}, "seed": 1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("duration_ms"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = r#"{"patient": 0, "episode": {"type": "nsr"}, "seed": 1, "duration_ms": 10, "colour": 1}"#;
        assert!(serde_json::from_str::<RunConfig>(text).unwrap_err().to_string().contains("colour"));
    }
}
