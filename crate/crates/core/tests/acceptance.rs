//! Acceptance run: one PASS/FAIL line per criterion, then a single assert.
//!
//! The end-to-end criteria drive the `icdsim` binary on the shipped
//! scenarios under `scenarios/` and read back what it writes.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use icdsim_core::device::{step_detector, DetectionMode, DetectionParams, DetectionWindow, PerZone, ZoneId, ZoneState};
use icdsim_core::egm::{Electrode, LeadConfig, DEFAULT_COIL_POINTS};
use icdsim_core::ep::reentry::ActivationTracker;
use icdsim_core::ep::{measure_cv, tune_conductivity, IonicParams, ScarGeometry, Simulation, Stimulus, StimulusSchedule, TissueGrid};
use icdsim_core::orchestrator::scenario::{draw_focal_bursts, focal_schedule};
use icdsim_core::orchestrator::{prepare, run_prepared, EpisodeSpec, Patient, Scenario, TissueSpec};
use icdsim_core::therapy::{
    prescribe, schedule_atp, AtpScheme, AtpZoneParams, DeliveryParams, TherapyCounters, TherapyDecision, TherapyKind,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, format!("{what} took {:.1} s (limit {limit_s} s)", elapsed.as_secs_f64()))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario_path(name: &str) -> PathBuf {
    repo_root().join("scenarios").join(name)
}

fn icdsim(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_icdsim")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("icdsim {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn read_events(path: &Path) -> Result<Vec<serde_json::Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

// Detection, written straight from the algorithm listing with plain
// arrays so it shares nothing with the library.

const TH: [f64; 4] = [429.0, 353.0, 300.0, 240.0];

fn oracle_zone(periods: &[f64], in_zone: bool, t_zone: f64, th: f64, dur: f64) -> (bool, f64, bool) {
    let mut fast = 0;
    for p in periods {
        if *p < th {
            fast += 1;
        }
    }
    let last = periods[periods.len() - 1];
    let mut in_next = in_zone;
    let mut t_next = t_zone;
    if fast >= 8 && last < th {
        in_next = true;
    }
    if in_zone {
        if fast >= 6 && last < th {
            t_next = t_zone + last;
        } else {
            in_next = false;
            t_next = 0.0;
        }
    }
    (in_next, t_next, t_next >= dur)
}

fn random_period(rng: &mut ChaCha8Rng) -> f64 {
    // Half the draws land within 15 ms of a threshold.
    if rng.gen_bool(0.5) {
        (TH[rng.gen_range(0..4)] + rng.gen_range(-15.0..15.0_f64)).round()
    } else {
        rng.gen_range(150.0..900.0_f64).round()
    }
}

fn compare_step(
    zones: &PerZone<ZoneState>,
    oracle: &[(bool, f64); 4],
    window: &DetectionWindow,
    p: &DetectionParams,
    mode: DetectionMode,
) -> (PerZone<ZoneState>, [(bool, f64); 4], bool) {
    let (next, sustained) = step_detector(zones, window, p, mode);
    let periods: Vec<f64> = window.periods.iter().copied().collect();
    let mut o = *oracle;
    let mut o_sustained = None;
    for (k, z) in ZoneId::ALL.into_iter().enumerate() {
        let dur = match mode {
            DetectionMode::Initial => p.dur_ms[z],
            DetectionMode::Redetection => p.redetect_dur_ms[z],
        };
        let (i, t, s) = oracle_zone(&periods, oracle[k].0, oracle[k].1, TH[k], dur);
        o[k] = (i, t);
        if s {
            o_sustained = Some(z);
        }
    }
    let same = sustained == o_sustained
        && ZoneId::ALL.into_iter().enumerate().all(|(k, z)| next[z].in_zone == o[k].0 && next[z].t_zone_ms.to_bits() == o[k].1.to_bits());
    (next, o, same)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let p = DetectionParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let periods: Vec<f64> = (0..10).map(|_| random_period(&mut rng)).collect();
        let window = DetectionWindow::from_periods(&periods);
        let mut zones = PerZone::splat(ZoneState::IDLE);
        let mut oracle = [(false, 0.0); 4];
        for (k, z) in ZoneId::ALL.into_iter().enumerate() {
            let s = ZoneState { in_zone: rng.gen_bool(0.5), t_zone_ms: rng.gen_range(0..3000) as f64 };
            zones[z] = s;
            oracle[k] = (s.in_zone, s.t_zone_ms);
        }
        let mode = if rng.gen_bool(0.5) { DetectionMode::Initial } else { DetectionMode::Redetection };
        if !compare_step(&zones, &oracle, &window, &p, mode).2 {
            mismatches += 1;
        }
    }
    let mut long_steps = 0;
    for _ in 0..1_000 {
        let len = rng.gen_range(10..200);
        // Runs of similar periods so zones are entered and held.
        let mut base = random_period(&mut rng);
        let mut window = DetectionWindow::new();
        let mut zones = PerZone::splat(ZoneState::IDLE);
        let mut oracle = [(false, 0.0); 4];
        for _ in 0..len {
            if rng.gen_bool(0.1) {
                base = random_period(&mut rng);
            }
            window.push_period((base + rng.gen_range(-20.0..20.0_f64)).round().max(100.0));
            if !window.is_warm() {
                continue;
            }
            long_steps += 1;
            let (next, o, same) = compare_step(&zones, &oracle, &window, &p, DetectionMode::Initial);
            if !same {
                mismatches += 1;
            }
            zones = next;
            oracle = o;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches"))?;
    within(start.elapsed(), 10.0, "oracle comparison")?;
    Ok(format!("10000 windows and 1000 sequences ({long_steps} steps), 0 mismatches in {:.2} s", start.elapsed().as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let p = DetectionParams::default();
    let mut cases = 0;
    for zone in ZoneId::ALL {
        for initial in [true, false] {
            for corr in 0..=10usize {
                for max in 0..=3u32 {
                    for tcount in 0..=max {
                        let mut window = DetectionWindow::from_periods(&[300.0, 310.0, 320.0, 330.0, 340.0, 350.0, 360.0, 370.0, 380.0, 390.0]);
                        window.last_beat_t_ms = Some(5000.0);
                        for k in 0..10 {
                            window.push_vtc(if k < corr { 0.99 } else { 0.5 });
                        }
                        let mut counters = TherapyCounters::with_max(PerZone::splat(max));
                        counters.initial = initial;
                        counters.tcount[zone] = tcount;
                        let (d, next) = prescribe(zone, &window, &counters, &p);

                        // The listing, branch by branch.
                        let (kind, consumes) = if zone == ZoneId::Vf1 && tcount < max {
                            (TherapyKind::QcAtp, true)
                        } else if (zone == ZoneId::Vt || zone == ZoneId::Vt1) && tcount < max {
                            if !initial || corr <= 3 {
                                (TherapyKind::Atp, true)
                            } else {
                                (TherapyKind::Inhibit, false)
                            }
                        } else {
                            (TherapyKind::Shock, false)
                        };
                        let tcount_next = if consumes { tcount + 1 } else { tcount };
                        let timed = kind == TherapyKind::Atp || kind == TherapyKind::QcAtp;
                        let ok = d.kind == kind
                            && d.zone == zone
                            && next.tcount[zone] == tcount_next
                            && ZoneId::ALL.into_iter().filter(|&z| z != zone).all(|z| next.tcount[z] == counters.tcount[z])
                            && (d.avg_vperiod_ms == timed.then_some(375.0))
                            && (d.v_time_ms == timed.then_some(5000.0));
                        check(ok, format!("{zone} initial={initial} corr={corr} tcount={tcount}/{max}: got {d:?}"))?;
                        cases += 1;
                    }
                }
            }
        }
    }
    within(start.elapsed(), 1.0, "truth table")?;
    Ok(format!("{cases} combinations match"))
}

fn decision(avg: f64, v_time: f64) -> TherapyDecision {
    TherapyDecision { zone: ZoneId::Vt, kind: TherapyKind::Atp, avg_vperiod_ms: Some(avg), v_time_ms: Some(v_time) }
}

fn criterion_3() -> Outcome {
    let d = DeliveryParams::default();
    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9);

    let burst = schedule_atp(AtpScheme::Burst, &decision(400.0, 1000.0), &AtpZoneParams::new(81.0, 8, 0.0), &d).map_err(|e| e.to_string())?;
    let iv = burst.intervals(1000.0);
    check(close(&iv, &[324.0; 8]), format!("burst intervals {iv:?}"))?;

    let qc = schedule_atp(AtpScheme::Qc, &decision(350.0, 1000.0), &AtpZoneParams::QC, &d).map_err(|e| e.to_string())?;
    let iv = qc.intervals(1000.0);
    check(close(&iv, &[308.0; 8]), format!("QC intervals {iv:?}"))?;

    let ramp = schedule_atp(AtpScheme::Ramp, &decision(400.0, 1000.0), &AtpZoneParams::new(88.0, 12, 5.0), &d).map_err(|e| e.to_string())?;
    let iv = ramp.intervals(1000.0);
    let expected: Vec<f64> = (0..12).map(|k| 352.0 - 5.0 * k as f64).collect();
    check(close(&iv, &expected), format!("ramp intervals {iv:?}"))?;
    Ok(format!("burst 8 x 324, QC 308, ramp {:.0} -> {:.0}", iv[0], iv[11]))
}

fn criterion_4(out: &Path) -> Outcome {
    let start = Instant::now();
    let dir = out.join("rvot");
    icdsim(&["run", scenario_path("p1_rvot.json").to_str().unwrap(), "-o", dir.to_str().unwrap()])?;
    let elapsed = start.elapsed();
    let events = read_events(&dir.join("events.jsonl"))?;
    let report = read_json(&dir.join("report.json"))?;
    let entries = events.iter().filter(|e| e["type"] == "zone_entry" && e["zone"] == "VT1").count();
    let sustained = events.iter().filter(|e| e["type"] == "sustained").count();
    check(entries > 0, "no VT1 zone entry")?;
    check(sustained == 0, format!("{sustained} sustained flags"))?;
    check(report["outcome"] == "no_therapy_needed", format!("outcome {}", report["outcome"]))?;
    check(report["therapies_delivered"] == 0, "therapy delivered")?;
    within(elapsed, 300.0, "30 s run")?;
    Ok(format!("{entries} VT1 entries, never sustained, no therapy ({:.0} s)", elapsed.as_secs_f64()))
}

/// Programming of the default sweep cell must equal the shipped default,
/// so that cell's run doubles as the default-ATP episode.
const DEFAULT_CELL: (u32, u32) = (81, 8);
/// Cell found to terminate during calibration.
const TERMINATING_CELL: (u32, u32) = (88, 12);

fn sweep_p2(out: &Path) -> Result<PathBuf, String> {
    let dir = out.join("sweep");
    if !dir.join("summary.csv").exists() {
        icdsim(&[
            "sweep",
            scenario_path("p2_vt.json").to_str().unwrap(),
            "--pct",
            "81,88",
            "--pulses",
            "8,12",
            "-o",
            dir.to_str().unwrap(),
        ])?;
    }
    Ok(dir)
}

fn criterion_5(out: &Path) -> Outcome {
    let nominal = AtpZoneParams::NOMINAL_VT;
    check(
        (nominal.pulse_interval_pct, nominal.n_pulses) == (DEFAULT_CELL.0 as f64, DEFAULT_CELL.1 as usize),
        "default cell differs from the default programming",
    )?;
    let dir = sweep_p2(out)?.join(format!("pct{}_n{}", DEFAULT_CELL.0, DEFAULT_CELL.1));
    let events = read_events(&dir.join("events.jsonl"))?;
    let therapies: Vec<String> = events
        .iter()
        .filter(|e| e["type"] == "therapy")
        .map(|e| match e["scheme"].as_str() {
            Some(s) => s.to_string(),
            None => e["kind"].as_str().unwrap_or("?").to_lowercase(),
        })
        .collect();
    check(therapies == ["burst", "ramp", "shock"], format!("therapy order {therapies:?}"))?;
    let zones: Vec<&str> = events.iter().filter(|e| e["type"] == "therapy").filter_map(|e| e["zone"].as_str()).collect();
    check(zones[..2].iter().all(|z| *z == "VT" || *z == "VT1"), format!("ATP zones {zones:?}"))?;
    Ok(format!("order {}", therapies.join(" -> ")))
}

fn criterion_6(out: &Path) -> Outcome {
    let dir = sweep_p2(out)?;
    let mut rdr = csv::Reader::from_path(dir.join("summary.csv")).map_err(|e| e.to_string())?;
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or(format!("no column {name}"));
    let (pct, pulses, one) = (col("pct")?, col("pulses")?, col("terminated_in_one_round")?);
    let mut cells = Vec::new();
    for r in rdr.records() {
        let r = r.map_err(|e| e.to_string())?;
        let p: u32 = r[pct].parse::<f64>().map_err(|e| e.to_string())? as u32;
        let n: u32 = r[pulses].parse::<u32>().map_err(|e| e.to_string())?;
        cells.push(((p, n), &r[one] == "true"));
    }
    let get = |c: (u32, u32)| cells.iter().find(|x| x.0 == c).map(|x| x.1);
    check(get(DEFAULT_CELL) == Some(false), format!("default cell {DEFAULT_CELL:?}: {:?}", get(DEFAULT_CELL)))?;
    let winners: Vec<_> = cells.iter().filter(|c| c.1 && c.0 .0 == 88 && (8..=15).contains(&c.0 .1)).map(|c| c.0).collect();
    check(!winners.is_empty(), format!("no 88% cell terminates in one round: {cells:?}"))?;
    check(get(TERMINATING_CELL) == Some(true), format!("calibrated cell {TERMINATING_CELL:?} no longer terminates"))?;
    Ok(format!("default {DEFAULT_CELL:?} fails, one-round terminations at {winners:?}"))
}

const SMALL_SITES: usize = 4;

/// A 51 x 51 patient-1 sheet with a few candidate ectopic sites.
fn small_base() -> Scenario {
    let episode = EpisodeSpec::Focal { site: 0, n_beats: [30, 30], cl_ms: [320.0, 320.0], n_episodes: 1, gap_ms: [100.0, 200.0] };
    let mut s = Scenario::new(Patient::P1, episode, 5000.0, 0);
    let mut tissue = TissueSpec::preset(Patient::P1);
    tissue.nx = 51;
    tissue.ny = 51;
    tissue.ectopic_sites_mm = (0..SMALL_SITES).map(|k| (5.0 + 5.0 * k as f64, 20.0)).collect();
    tissue.tip_mm = (12.0, 5.0);
    s.tissue = Some(tissue);
    s.egm.leads = LeadConfig {
        tip: Electrode::point("tip", [12.0, 5.0, 1.0]),
        ring: Electrode::point("ring", [12.0, 8.0, 1.0]),
        coil: Electrode::segment("coil", [7.0, 5.0, 2.0], [17.0, 5.0, 2.0], DEFAULT_COIL_POINTS).unwrap(),
        ..LeadConfig::default()
    };
    s.closed_loop.template_ms = 5000;
    s
}

/// Randomizes the episode, device clocks and loop cadence of the base.
/// Short clocks and no morphology inhibition make therapy, and hence
/// rollback, happen inside five seconds.
fn small_scenario(base: &Scenario, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = base.clone();
    s.seed = seed;
    let cl = rng.gen_range(340.0..380.0_f64).round();
    let site = rng.gen_range(0..SMALL_SITES);
    s.episode = EpisodeSpec::Focal { site, n_beats: [30, 30], cl_ms: [cl, cl], n_episodes: 1, gap_ms: [100.0, 200.0] };
    s.icd.detection.dur_ms = PerZone::splat(rng.gen_range(300.0..600.0_f64).round());
    s.icd.detection.redetect_dur_ms = PerZone::splat(300.0);
    s.icd.detection.vtc_threshold = 1.0;
    s.icd.delivery.shock_delay_ms = 100.0;
    s.icd.atp.vt1.n_pulses = rng.gen_range(3..8);
    s.icd.atp.vt.n_pulses = rng.gen_range(3..8);
    s.icd.atp.vf1.n_pulses = rng.gen_range(3..8);
    s.closed_loop.segment_ms = rng.gen_range(100..500);
    s.closed_loop.checkpoint_interval_ms = rng.gen_range(300..1000);
    s
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    // Template recording and tuning depend only on the tissue, so the
    // sheet is prepared once and each scenario swaps in its own stimuli.
    let base = small_base();
    let prepared = prepare(&base).map_err(|e| e.to_string())?;
    let mut rollbacks = 0;
    for seed in 0..20 {
        let s = small_scenario(&base, seed);
        let mut p = prepared.clone();
        let EpisodeSpec::Focal { site, .. } = s.episode else { unreachable!() };
        // The focus alone paces the sheet so the sensed rate stays regular.
        p.background = focal_schedule(p.sim.grid(), site, &draw_focal_bursts(&s.episode, seed, 0.0));
        let (mut sim, mut state) = (p.sim.clone(), p.state.clone());
        let run = run_prepared(p, &s).map_err(|e| format!("seed {seed}: {e}"))?;
        rollbacks += run.report.rollbacks;
        // Uninterrupted replay with every delivered therapy known up front.
        let steps = run.final_state.steps() - state.steps();
        sim.run_steps(&mut state, &run.schedule, steps);
        let same = state.steps() == run.final_state.steps()
            && state.vm_field().iter().zip(run.final_state.vm_field()).all(|(a, b)| a.to_bits() == b.to_bits())
            && state.h_field().iter().zip(run.final_state.h_field()).all(|(a, b)| a.to_bits() == b.to_bits());
        check(same, format!("seed {seed}: resumed state differs from the uninterrupted run"))?;
    }
    check(rollbacks >= 20, format!("only {rollbacks} rollbacks over 20 scenarios"))?;
    within(start.elapsed(), 120.0, "20 scenarios")?;
    Ok(format!("20 scenarios, {rollbacks} rollbacks, bit-identical ({:.0} s)", start.elapsed().as_secs_f64()))
}

fn criterion_8() -> Outcome {
    let ionic = IonicParams::default();
    let dt = 0.05;

    // h stays in [0, 1] under random stimulation.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let mut sim = Simulation::new(TissueGrid::sheet(30, 30, 0.5, 0.1), ionic, dt).map_err(|e| e.to_string())?;
        let mut state = sim.limit_cycle_state();
        let mut sched = StimulusSchedule::new();
        for _ in 0..rng.gen_range(1..12) {
            let nodes: Vec<usize> = (0..rng.gen_range(1..40)).map(|_| rng.gen_range(0..900)).collect();
            sched.push(Stimulus::at_nodes(nodes, rng.gen_range(0.0..300.0), rng.gen_range(0.5..5.0), rng.gen_range(1.0..2000.0)));
        }
        for _ in 0..(400.0 / dt) as usize {
            sim.step(&mut state, &sched);
            check(state.h_field().iter().all(|h| (0.0..=1.0).contains(h)), format!("h left [0, 1] at {} ms", state.t_ms()))?;
        }
    }

    // Resting tissue does not move at all.
    let mut sim = Simulation::new(TissueGrid::sheet(20, 20, 0.5, 0.1), ionic, dt).map_err(|e| e.to_string())?;
    let mut state = sim.uniform_state(0.0, 1.0);
    sim.run_steps(&mut state, &StimulusSchedule::new(), 2000);
    check(state.vm_field().iter().all(|v| *v == 0.0) && state.h_field().iter().all(|h| *h == 1.0), "rest drifted")?;

    // Diffusion alone conserves the total potential, scar and all.
    let mut grid = TissueGrid::sheet(60, 60, 0.5, 0.1);
    grid.add_scar_with_isthmus(&ScarGeometry {
        center_mm: (15.0, 15.0),
        semi_axes_mm: (8.0, 9.0),
        isthmus_width_mm: 3.0,
        isthmus_factor: 0.25,
        vertical: true,
        border_zone_mm: 0.0,
    });
    let mut sim = Simulation::new(grid, ionic, dt).map_err(|e| e.to_string())?;
    sim.set_reaction(false);
    let mut state = sim.uniform_state(0.0, 1.0);
    let scar = sim.grid().scar_mask.clone();
    for k in 0..sim.grid().len() {
        if !scar[k] {
            state.set_vm(k, rng.gen_range(0.0..1.0));
        }
    }
    let total = |s: &icdsim_core::ep::TissueState| (0..s.vm_field().len()).filter(|&k| !scar[k]).map(|k| s.vm(k)).sum::<f64>();
    let before = total(&state);
    for _ in 0..1000 {
        sim.diffuse(&mut state);
    }
    let drift = (total(&state) - before).abs();
    check(drift <= 1e-9, format!("vm drift {drift:e} per 1000 steps"))?;

    // Tuned conductivity reproduces the target speed on the strip.
    let mut worst: f64 = 0.0;
    for target in [0.4, 0.6] {
        let tuned = tune_conductivity(target, 0.5, &ionic, dt).map_err(|e| e.to_string())?;
        let cv = measure_cv(tuned.diffusivity, 0.5, &ionic, dt).map_err(|e| e.to_string())?;
        worst = worst.max((cv - target).abs() / target);
    }
    check(worst < 0.02, format!("CV error {:.2}%", worst * 100.0))?;

    // The shipped circuit keeps going on its own.
    let p = prepare(&load_scenario("p2_vt.json")?).map_err(|e| e.to_string())?;
    let (mut sim, mut state) = (p.sim, p.state);
    let mid = sim.grid().isthmus_nodes();
    let probe = mid[mid.len() / 2];
    let mut tracker = ActivationTracker::new(probe, sim.ionic().v_gate, &state);
    let none = StimulusSchedule::new();
    let t_end = state.t_ms() + 10_000.0;
    while state.t_ms() < t_end && tracker.times_ms.len() < 22 {
        sim.step(&mut state, &none);
        tracker.observe(&state);
    }
    let cls: Vec<f64> = tracker.times_ms.windows(2).map(|w| w[1] - w[0]).collect();
    check(cls.len() >= 20, format!("re-entry lasted {} cycles", cls.len()))?;
    let mean = cls.iter().sum::<f64>() / cls.len() as f64;
    let sd = (cls.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / cls.len() as f64).sqrt();
    check(sd / mean < 0.05, format!("cycle-length jitter {:.1}%", 100.0 * sd / mean))?;
    Ok(format!(
        "h bounded, rest exact, drift {drift:.1e}, CV error {:.2}%, {} cycles at {mean:.0} ms (jitter {:.1}%)",
        worst * 100.0,
        cls.len(),
        100.0 * sd / mean
    ))
}

/// A shipped run config minus its output settings.
fn load_scenario(name: &str) -> Result<Scenario, String> {
    let mut cfg = read_json(&scenario_path(name))?;
    let obj = cfg.as_object_mut().ok_or("config is not an object")?;
    for key in ["output_dir", "plots", "verbosity"] {
        obj.remove(key);
    }
    serde_json::from_value(cfg).map_err(|e| e.to_string())
}

fn criterion_9(out: &Path) -> Outcome {
    let dir = out.join("nsr");
    icdsim(&["run", scenario_path("p0_nsr.json").to_str().unwrap(), "-o", dir.to_str().unwrap()])?;
    let report = read_json(&dir.join("report.json"))?;
    let bpm = report["mean_sensed_bpm"].as_f64().ok_or("no sensed rate")?;
    check((bpm - 75.0).abs() <= 1.0, format!("{bpm:.2} bpm"))?;
    check(report["outcome"] == "no_therapy_needed", format!("outcome {}", report["outcome"]))?;
    Ok(format!("{bpm:.2} bpm"))
}

fn criterion_10(out: &Path) -> Outcome {
    let cfg = scenario_path("p1_short.json");
    let (a, b) = (out.join("det_a"), out.join("det_b"));
    icdsim(&["run", cfg.to_str().unwrap(), "-o", a.to_str().unwrap()])?;
    icdsim(&["run", cfg.to_str().unwrap(), "-o", b.to_str().unwrap()])?;
    let ra = std::fs::read(a.join("report.json")).map_err(|e| e.to_string())?;
    let rb = std::fs::read(b.join("report.json")).map_err(|e| e.to_string())?;
    check(ra == rb, "report.json differs between runs")?;
    Ok(format!("{} identical bytes", ra.len()))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("detector matches the listing", Box::new(criterion_1)),
        ("prescription truth table", Box::new(criterion_2)),
        ("ATP arithmetic", Box::new(criterion_3)),
        ("non-sustained outflow bursts are not treated", Box::new(|| criterion_4(out))),
        ("burst, ramp, then shock", Box::new(|| criterion_5(out))),
        ("adjusted ATP terminates where the default does not", Box::new(|| criterion_6(out))),
        ("rollback is bit-identical", Box::new(criterion_7)),
        ("tissue physics", Box::new(criterion_8)),
        ("sinus rate 75 bpm", Box::new(|| criterion_9(out))),
        ("deterministic report", Box::new(|| criterion_10(out))),
    ];
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        match f() {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{:.1} s]", k + 1, start.elapsed().as_secs_f64()),
            Err(msg) => {
                println!("FAIL {:>2} {name}: {msg} [{:.1} s]", k + 1, start.elapsed().as_secs_f64());
                failed.push(k + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
