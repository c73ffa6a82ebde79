//! Scenario configuration and the four virtual-patient presets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::{DetectionParams, PerZone};
use crate::egm::LeadConfig;
use crate::ep::ionic::{SINUS_AMPLITUDE, SINUS_DURATION_MS};
use crate::ep::{InductionProtocol, IonicParams, ScarGeometry, Stimulus, StimulusSchedule, TissueGrid};
use crate::error::{Error, Result};
use crate::sensing::SensingParams;
use crate::therapy::{AtpParams, DeliveryParams, DEFAULT_MAX_ATTEMPTS};

/// Sinus cycle length (ms).
pub const SINUS_CL_MS: f64 = 800.0;
/// First sinus pulse; leaves room for an S1 at the start of an induction.
pub const SINUS_FIRST_MS: f64 = 400.0;
/// Default run length used by the patient presets (ms).
pub const DEFAULT_DURATION_MS: f64 = 30_000.0;

/// Virtual patient analogs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Patient {
    /// Plain sheet, NSR only.
    P0,
    /// Plain sheet with an ectopic site near the top edge (outflow tract).
    P1,
    /// Scar on the side away from the lead (left-ventricular analog).
    P2,
    /// Scar under the lead (right-ventricular analog).
    P3,
}

impl TryFrom<u8> for Patient {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Patient::P0),
            1 => Ok(Patient::P1),
            2 => Ok(Patient::P2),
            3 => Ok(Patient::P3),
            _ => Err(format!("patient must be 0, 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Patient> for u8 {
    fn from(p: Patient) -> u8 {
        p as u8
    }
}

impl Patient {
    pub fn has_ectopic_site(self) -> bool {
        self != Patient::P0
    }

    pub fn has_scar(self) -> bool {
        matches!(self, Patient::P2 | Patient::P3)
    }
}

/// Isthmus traversal direction of an induced circuit: antegrade runs from
/// the far (top) end of the isthmus towards the sinus edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Antegrade,
    Retrograde,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpisodeSpec {
    Nsr,
    /// Bursts of ectopic beats. Ranges are inclusive `[min, max]` and are
    /// drawn per burst from the scenario seed.
    Focal {
        #[serde(default)]
        site: usize,
        n_beats: [u32; 2],
        cl_ms: [f64; 2],
        n_episodes: u32,
        gap_ms: [f64; 2],
    },
    Reentrant {
        isthmus_factor: f64,
        #[serde(default)]
        direction: Direction,
    },
}

/// Post-therapy observation rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminationParams {
    pub observation_ms: f64,
    /// Consecutive periods at or above the VT1 threshold that count as
    /// restored rhythm.
    pub slow_beats: usize,
}

impl Default for TerminationParams {
    fn default() -> Self {
        Self { observation_ms: 10_000.0, slow_beats: 10 }
    }
}

/// Device programming.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcdParams {
    pub sensing: SensingParams,
    pub detection: DetectionParams,
    pub atp: AtpParams,
    pub delivery: DeliveryParams,
    pub max_attempts: PerZone<u32>,
    pub termination: TerminationParams,
    /// Sensing is blanked from a therapy decision until this long after
    /// the last delivered pulse.
    pub post_therapy_blank_ms: f64,
}

impl Default for IcdParams {
    fn default() -> Self {
        Self {
            sensing: SensingParams::default(),
            detection: DetectionParams::default(),
            atp: AtpParams::default(),
            delivery: DeliveryParams::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            termination: TerminationParams::default(),
            post_therapy_blank_ms: 300.0,
        }
    }
}

impl IcdParams {
    pub fn validate(&self) -> Result<()> {
        self.sensing.validate()?;
        self.detection.validate()?;
        self.atp.validate()?;
        self.delivery.validate()?;
        if !(self.post_therapy_blank_ms.is_finite() && self.post_therapy_blank_ms >= 0.0) {
            return Err(Error::Config("post_therapy_blank_ms must be non-negative".into()));
        }
        let t = &self.termination;
        if !(t.observation_ms.is_finite() && t.observation_ms > 0.0) || t.slow_beats == 0 {
            return Err(Error::Config("termination rule needs a positive window and beat count".into()));
        }
        Ok(())
    }
}

/// Pipelining and checkpoint cadence of the closed loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopParams {
    pub segment_ms: u64,
    pub checkpoint_interval_ms: u64,
    /// Length of the NSR run the morphology template is built from.
    pub template_ms: u64,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self { segment_ms: 500, checkpoint_interval_ms: 1000, template_ms: 6500 }
    }
}

impl LoopParams {
    pub fn validate(&self) -> Result<()> {
        if self.segment_ms == 0 || self.checkpoint_interval_ms == 0 {
            return Err(Error::Config("segment and checkpoint intervals must be positive".into()));
        }
        if self.template_ms < 5000 {
            return Err(Error::Config("template run must last at least 5000 ms".into()));
        }
        Ok(())
    }
}

/// Lead placement; the gain is normally recalibrated per patient so the
/// NSR near-field peak reads the nominal amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgmParams {
    pub leads: LeadConfig,
    pub auto_gain: bool,
}

impl Default for EgmParams {
    fn default() -> Self {
        Self { leads: LeadConfig::default(), auto_gain: true }
    }
}

/// Scar placement without the isthmus conductivity, which comes from the
/// episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScarSpec {
    pub center_mm: (f64, f64),
    pub semi_axes_mm: (f64, f64),
    pub isthmus_width_mm: f64,
    #[serde(default)]
    pub border_zone_mm: f64,
}

/// Tissue substrate of a patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx_mm: f64,
    pub dt_ms: f64,
    /// Planar conduction velocity of healthy tissue (mm/ms).
    pub cv_mm_per_ms: f64,
    pub ionic: IonicParams,
    /// Membrane of the isthmus and border zone, if remodeled.
    #[serde(default)]
    pub remodeled_ionic: Option<IonicParams>,
    #[serde(default)]
    pub scar: Option<ScarSpec>,
    #[serde(default)]
    pub ectopic_sites_mm: Vec<(f64, f64)>,
    /// Centre of the lead-tip pacing footprint (mm).
    pub tip_mm: (f64, f64),
}

impl TissueSpec {
    /// Preset substrate of a patient.
    pub fn preset(patient: Patient) -> Self {
        let base = Self {
            nx: 101,
            ny: 101,
            dx_mm: 0.5,
            dt_ms: 0.05,
            cv_mm_per_ms: 0.6,
            ionic: IonicParams::default(),
            remodeled_ionic: None,
            scar: None,
            ectopic_sites_mm: Vec::new(),
            tip_mm: (40.0, 10.0),
        };
        let outflow = vec![(25.0, 47.5)];
        // Slower healthy tissue and a remodeled isthmus with a longer
        // recovery so the circuit sits in the VT range and ATP can capture.
        // The healthy recovery is lengthened too, which narrows the
        // excitable gap enough that ATP timing matters.
        let scarred = |center_mm: (f64, f64)| Self {
            cv_mm_per_ms: 0.4,
            ionic: IonicParams { tau_close: 175.0, ..IonicParams::default() },
            remodeled_ionic: Some(IonicParams { tau_close: 200.0, ..IonicParams::default() }),
            scar: Some(ScarSpec {
                center_mm,
                semi_axes_mm: (10.0, 11.0),
                isthmus_width_mm: 4.0,
                border_zone_mm: 0.0,
            }),
            ectopic_sites_mm: outflow.clone(),
            ..base.clone()
        };
        match patient {
            Patient::P0 => base,
            Patient::P1 => Self { ectopic_sites_mm: outflow.clone(), ..base },
            // Upper left, so fronts leaving the circuit cross the bipole along its axis.
            Patient::P2 => scarred((10.0, 35.0)),
            Patient::P3 => scarred((40.0, 25.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 10 || self.ny < 10 {
            return Err(Error::Config("tissue needs at least 10×10 nodes".into()));
        }
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(pos(self.dx_mm) && pos(self.dt_ms) && pos(self.cv_mm_per_ms)) {
            return Err(Error::Config("dx_mm, dt_ms and cv_mm_per_ms must be positive".into()));
        }
        self.ionic.validate()?;
        if let Some(r) = &self.remodeled_ionic {
            r.validate()?;
        }
        if let Some(s) = &self.scar {
            if !(pos(s.semi_axes_mm.0) && pos(s.semi_axes_mm.1) && pos(s.isthmus_width_mm)) {
                return Err(Error::Config("scar axes and isthmus width must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub patient: Patient,
    pub episode: EpisodeSpec,
    #[serde(default)]
    pub icd: IcdParams,
    pub duration_ms: f64,
    pub seed: u64,
    /// Replaces the patient's preset substrate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tissue: Option<TissueSpec>,
    #[serde(default)]
    pub egm: EgmParams,
    #[serde(default)]
    pub closed_loop: LoopParams,
}

impl Scenario {
    pub fn new(patient: Patient, episode: EpisodeSpec, duration_ms: f64, seed: u64) -> Self {
        Self {
            patient,
            episode,
            icd: IcdParams::default(),
            duration_ms,
            seed,
            tissue: None,
            egm: EgmParams::default(),
            closed_loop: LoopParams::default(),
        }
    }

    pub fn tissue_spec(&self) -> TissueSpec {
        self.tissue.clone().unwrap_or_else(|| TissueSpec::preset(self.patient))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ms.is_finite() && self.duration_ms >= 1.0) {
            return Err(Error::Config("duration_ms must be at least 1 ms".into()));
        }
        self.icd.validate()?;
        self.closed_loop.validate()?;
        let tissue = self.tissue_spec();
        tissue.validate()?;
        match &self.episode {
            EpisodeSpec::Nsr => {}
            EpisodeSpec::Focal { site, n_beats, cl_ms, n_episodes, gap_ms } => {
                if !self.patient.has_ectopic_site() {
                    return Err(Error::Config(format!(
                        "patient {} has no ectopic site for a focal episode",
                        u8::from(self.patient)
                    )));
                }
                if *site >= tissue.ectopic_sites_mm.len() {
                    return Err(Error::Config(format!("ectopic site {site} does not exist")));
                }
                let ordered = |r: [f64; 2]| r[0].is_finite() && r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
                if n_beats[0] == 0 || n_beats[0] > n_beats[1] || !ordered(*cl_ms) || !ordered(*gap_ms) {
                    return Err(Error::Config("focal ranges must be positive and ordered [min, max]".into()));
                }
                if *n_episodes == 0 {
                    return Err(Error::Config("focal episode needs at least one burst".into()));
                }
            }
            EpisodeSpec::Reentrant { isthmus_factor, .. } => {
                if !self.patient.has_scar() || tissue.scar.is_none() {
                    return Err(Error::Config(format!(
                        "patient {} has no scar for a re-entrant episode",
                        u8::from(self.patient)
                    )));
                }
                if !(isthmus_factor.is_finite() && *isthmus_factor > 0.0 && *isthmus_factor <= 1.0) {
                    return Err(Error::Config("isthmus_factor must lie in (0, 1]".into()));
                }
            }
        }
        Ok(())
    }
}

/// Tissue, pacing and induction set-up derived from a scenario.
#[derive(Clone, Debug)]
pub struct PatientModel {
    pub grid: TissueGrid,
    pub ionic: IonicParams,
    pub remodeled_ionic: Option<IonicParams>,
    pub dt_ms: f64,
    pub induction: Option<InductionProtocol>,
}

/// Builds the sheet for a scenario given the tuned healthy diffusivity.
pub fn build_patient(scenario: &Scenario, diffusivity: f64) -> Result<PatientModel> {
    let spec = scenario.tissue_spec();
    let mut grid = TissueGrid::sheet(spec.nx, spec.ny, spec.dx_mm, diffusivity);
    grid.set_tip(spec.tip_mm.0, spec.tip_mm.1);
    for &(x, y) in &spec.ectopic_sites_mm {
        grid.ectopic_sites.push(grid.block_at(x, y, 5));
    }
    let mut induction = None;
    if let (Some(scar), EpisodeSpec::Reentrant { isthmus_factor, direction }) = (&spec.scar, &scenario.episode) {
        grid.add_scar_with_isthmus(&ScarGeometry {
            center_mm: scar.center_mm,
            semi_axes_mm: scar.semi_axes_mm,
            isthmus_width_mm: scar.isthmus_width_mm,
            isthmus_factor: *isthmus_factor,
            vertical: true,
            border_zone_mm: scar.border_zone_mm,
        });
        induction = Some(induction_protocol(&grid, scar, *direction));
    } else if let Some(scar) = &spec.scar {
        // Other episodes keep the scar but conduct normally through the isthmus.
        grid.add_scar_with_isthmus(&ScarGeometry {
            center_mm: scar.center_mm,
            semi_axes_mm: scar.semi_axes_mm,
            isthmus_width_mm: scar.isthmus_width_mm,
            isthmus_factor: 1.0,
            vertical: true,
            border_zone_mm: scar.border_zone_mm,
        });
    }
    grid.validate()?;
    Ok(PatientModel { grid, ionic: spec.ionic, remodeled_ionic: spec.remodeled_ionic, dt_ms: spec.dt_ms, induction })
}

/// Block at the near end of the isthmus (antegrade) or the far end
/// (retrograde); S1 from the sheet edge on the blocked side.
fn induction_protocol(grid: &TissueGrid, scar: &ScarSpec, direction: Direction) -> InductionProtocol {
    let (cx, cy) = scar.center_mm;
    let ay = scar.semi_axes_mm.1;
    let reach = 3.0;
    let block_nodes = grid
        .isthmus_nodes()
        .into_iter()
        .filter(|&n| {
            let y = grid.position_mm(n).1;
            match direction {
                Direction::Antegrade => y < cy - ay + reach,
                Direction::Retrograde => y > cy + ay - reach,
            }
        })
        .collect();
    let s1_site = match direction {
        Direction::Antegrade => grid.rows(0..5),
        Direction::Retrograde => grid.rows(grid.ny - 5..grid.ny),
    };
    InductionProtocol {
        block_window_ms: 600.0,
        s1_site,
        s1_time_ms: 1.0,
        s1_amplitude: 1000.0,
        s1_duration_ms: 4.0,
        block_nodes,
        entry_probe: grid.nearest_node(cx, cy),
        verify_cycles: 3,
        max_cycle_ms: 900.0,
    }
}

/// Sinus pacing from [`SINUS_FIRST_MS`] until `until_ms`.
pub fn sinus_schedule(grid: &TissueGrid, until_ms: f64) -> StimulusSchedule {
    StimulusSchedule::periodic(&grid.sinus_site, SINUS_FIRST_MS, SINUS_CL_MS, until_ms, SINUS_DURATION_MS, SINUS_AMPLITUDE)
}

/// One ectopic burst as drawn from the seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalBurst {
    pub onset_ms: f64,
    pub n_beats: u32,
    pub cl_ms: f64,
}

/// Draws the bursts of a focal episode starting after `t0_ms`. Each burst
/// starts one gap after the end of the previous one.
pub fn draw_focal_bursts(episode: &EpisodeSpec, seed: u64, t0_ms: f64) -> Vec<FocalBurst> {
    let EpisodeSpec::Focal { n_beats, cl_ms, n_episodes, gap_ms, .. } = episode else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = t0_ms;
    let mut out = Vec::with_capacity(*n_episodes as usize);
    for _ in 0..*n_episodes {
        let gap = rng.gen_range(gap_ms[0]..=gap_ms[1]);
        let n = rng.gen_range(n_beats[0]..=n_beats[1]);
        let cl = rng.gen_range(cl_ms[0]..=cl_ms[1]).round();
        let onset = (t + gap).round();
        out.push(FocalBurst { onset_ms: onset, n_beats: n, cl_ms: cl });
        t = onset + f64::from(n.saturating_sub(1)) * cl;
    }
    out
}

/// Ectopic stimuli for a set of bursts, at sinus strength and duration.
pub fn focal_schedule(grid: &TissueGrid, site: usize, bursts: &[FocalBurst]) -> StimulusSchedule {
    let mut out = StimulusSchedule::new();
    let Some(nodes) = grid.ectopic_sites.get(site) else { return out };
    for b in bursts {
        for k in 0..b.n_beats {
            let t = b.onset_ms + f64::from(k) * b.cl_ms;
            out.push(Stimulus::at_nodes(nodes.clone(), t, SINUS_DURATION_MS, SINUS_AMPLITUDE));
        }
    }
    out
}

/// The shipped patient-1 outflow-tract episode: 8–10 beat bursts at
/// 120–150 bpm.
pub fn rvot_episode() -> EpisodeSpec {
    EpisodeSpec::Focal { site: 0, n_beats: [8, 10], cl_ms: [400.0, 500.0], n_episodes: 4, gap_ms: [2500.0, 4500.0] }
}
