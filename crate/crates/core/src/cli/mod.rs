pub mod config;
pub mod plot;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use icdsim_core::ep::{induce_reentry, tune_conductivity, Simulation};
use icdsim_core::error::Error;
use icdsim_core::orchestrator::closed_loop::{prepare, run_prepared, ClosedLoopRun, EpisodeReport};
use icdsim_core::orchestrator::scenario::{build_patient, sinus_schedule};
use icdsim_core::orchestrator::{replay_open_loop, Event, EventKind, IcdParams, Outcome};
use icdsim_core::sensing::{EgmTrace, NsrTemplate};
use icdsim_core::therapy::TherapyKind;

use config::RunConfig;

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Sim(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Sim(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Sim(m) => write!(f, "simulation error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) | Error::ElectrodeClearance { .. } => CliError::Config(e.to_string()),
            other => CliError::Sim(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Sim(format!("{}: {e}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Sim(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_events(path: &Path, events: &[Event]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for e in events {
        let line = serde_json::to_string(e).map_err(|e| CliError::Sim(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Config(format!("{} line {}: {e}", path.display(), k + 1)))?,
        );
    }
    Ok(out)
}

fn write_plots(dir: &Path, trace: &EgmTrace, events: &[Event], icd: &IcdParams) -> Result<(), CliError> {
    let egm = dir.join("egm.svg");
    fs::write(&egm, plot::egm_svg(trace, events)).map_err(|e| io_err(&egm, e))?;
    let periods = dir.join("periods.svg");
    fs::write(&periods, plot::period_svg(events, &icd.detection)).map_err(|e| io_err(&periods, e))
}

fn write_run(dir: &Path, run: &ClosedLoopRun, icd: &IcdParams, plots: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    run.trace.save_csv(&dir.join("egm.csv"))?;
    write_events(&dir.join("events.jsonl"), &run.report.events)?;
    write_json(&dir.join("report.json"), &run.report)?;
    write_json(&dir.join("template.json"), &run.template)?;
    if plots {
        write_plots(dir, &run.trace, &run.report.events, icd)?;
    }
    Ok(())
}

pub fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<EpisodeReport, CliError> {
    let cfg = RunConfig::load(config)?;
    let scenario = cfg.scenario();
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    log::info!("running patient {} for {} ms", u8::from(cfg.patient), cfg.duration_ms);
    let run = run_prepared(prepare(&scenario)?, &scenario)?;
    run.report.check_consistency()?;
    write_run(&dir, &run, &cfg.icd, cfg.plots)?;
    log::info!("outcome {:?} after {} therapies", run.report.outcome, run.report.therapies_delivered);
    Ok(run.report)
}

pub fn cmd_replay(
    egm: &Path,
    icd: Option<&Path>,
    template: Option<&Path>,
    out: &Path,
) -> Result<EpisodeReport, CliError> {
    let trace = EgmTrace::load_csv(egm).map_err(|e| CliError::Config(format!("{}: {e}", egm.display())))?;
    let params: IcdParams = match icd {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => IcdParams::default(),
    };
    let template: Option<NsrTemplate> = match template {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let report = replay_open_loop(&trace, &params, template)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_events(&out.join("events.jsonl"), &report.events)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn write_activation_map(path: &Path, map: &[f64], nx: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Sim(format!("{}: {e}", path.display())))?;
    for row in map.chunks(nx.max(1)) {
        let cells: Vec<String> =
            row.iter().map(|t| if t.is_nan() { String::new() } else { format!("{t}") }).collect();
        w.write_record(&cells).map_err(|e| CliError::Sim(e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn cmd_induce(config: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let scenario = cfg.scenario();
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let spec = scenario.tissue_spec();
    let tuned = tune_conductivity(spec.cv_mm_per_ms, spec.dx_mm, &spec.ionic, spec.dt_ms)?;
    let model = build_patient(&scenario, tuned.diffusivity)?;
    let Some(protocol) = model.induction.clone() else {
        return Err(CliError::Config("induce needs a re-entrant episode".into()));
    };
    let nx = model.grid.nx;
    let mut sim = Simulation::with_remodeled(model.grid, model.ionic, model.remodeled_ionic, model.dt_ms)?;
    let state = sim.limit_cycle_state();
    let sinus = sinus_schedule(sim.grid(), 20_000.0);
    match induce_reentry(&mut sim, state, &protocol, &sinus) {
        Ok((ckpt, _, report)) => {
            write_activation_map(&dir.join("activation_map.csv"), &report.activation_map_ms, nx)?;
            ckpt.save(&dir.join("checkpoint.json"))?;
            write_json(&dir.join("induction.json"), &report)?;
            log::info!("re-entry induced, mean cycle {:?} ms", report.mean_cycle_ms());
            Ok(())
        }
        Err(Error::InductionFailed { reason, activation_map, nx, .. }) => {
            write_activation_map(&dir.join("activation_map.csv"), &activation_map, nx)?;
            Err(CliError::Sim(format!("induction failed: {reason} (activation map written)")))
        }
        Err(e) => Err(e.into()),
    }
}

/// One row of the sweep summary.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub episode: String,
    pub pct: f64,
    pub pulses: usize,
    pub ramp_decrement_ms: f64,
    pub outcome: Outcome,
    pub therapies: u32,
    pub atp_rounds: u32,
    pub terminated_in_one_round: bool,
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SIMICD_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Config(format!("SIMICD_THREADS={v} is not a count")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| CliError::Sim(e.to_string()))
}

/// Cartesian sweep over the VT and VT1 ATP settings. The tissue start is
/// prepared once and shared by every cell.
pub fn cmd_sweep(
    config: &Path,
    pcts: &[f64],
    pulses: &[usize],
    out: Option<PathBuf>,
) -> Result<Vec<SweepRow>, CliError> {
    if pcts.is_empty() || pulses.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    let cfg = RunConfig::load(config)?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let base = cfg.scenario();
    let cells: Vec<(f64, usize)> = pcts.iter().flat_map(|&p| pulses.iter().map(move |&n| (p, n))).collect();
    let mut scenarios = Vec::with_capacity(cells.len());
    for &(pct, n) in &cells {
        let mut s = base.clone();
        for z in [&mut s.icd.atp.vt, &mut s.icd.atp.vt1] {
            z.pulse_interval_pct = pct;
            z.coupling_interval_pct = pct;
            z.n_pulses = n;
        }
        s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        scenarios.push(s);
    }
    let prepared = prepare(&base)?;
    let episode = serde_json::to_string(&base.episode).map_err(|e| CliError::Sim(e.to_string()))?;
    let pool = thread_pool()?;
    let rows: Vec<Result<SweepRow, CliError>> = pool.install(|| {
        scenarios
            .par_iter()
            .zip(cells.par_iter())
            .map(|(s, &(pct, n))| {
                let run = run_prepared(prepared.clone(), s)?;
                run.report.check_consistency()?;
                write_run(&dir.join(format!("pct{pct}_n{n}")), &run, &s.icd, cfg.plots)?;
                let r = &run.report;
                let atp_rounds = r.therapies.iter().filter(|t| t.kind.is_atp()).count() as u32;
                Ok(SweepRow {
                    episode: episode.clone(),
                    pct,
                    pulses: n,
                    ramp_decrement_ms: s.icd.atp.vt.ramp_decrement_ms,
                    outcome: r.outcome,
                    therapies: r.therapies_delivered,
                    atp_rounds,
                    terminated_in_one_round: r.outcome == Outcome::TerminatedAfterKTherapies
                        && r.therapies_delivered == 1
                        && r.therapies[0].kind != TherapyKind::Shock
                        && r.events.iter().any(|e| matches!(e.kind, EventKind::Terminated)),
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Sim(format!("{}: {e}", path.display())))?;
    for row in &rows {
        w.serialize(row).map_err(|e| CliError::Sim(e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(rows)
}

pub fn cmd_plot(run_dir: &Path, icd: Option<&Path>) -> Result<(), CliError> {
    let trace = EgmTrace::load_csv(&run_dir.join("egm.csv"))?;
    let events = read_events(&run_dir.join("events.jsonl"))?;
    let params: IcdParams = match icd {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => IcdParams::default(),
    };
    write_plots(run_dir, &trace, &events, &params)
}
