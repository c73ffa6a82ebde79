//! C ABI over `icdsim_core`.
//!
//! Objects cross the boundary as opaque pointers created by `*_new` or
//! `*_from_json` functions and released with the matching `*_free`.
//! Every fallible call returns an [`IcdsimStatus`]; on failure the message
//! is kept per thread and can be fetched with [`icdsim_last_error`].
//! Strings returned to the caller must be released with
//! [`icdsim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use icdsim_core::device::ZoneId;
use icdsim_core::error::Error;
use icdsim_core::orchestrator::{
    replay_open_loop, run_closed_loop, Delivery, EpisodeReport, Event, Icd, IcdParams, Outcome, Scenario,
};
use icdsim_core::sensing::{EgmTrace, NsrTemplate};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcdsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcdsimOutcome {
    NoTherapyNeeded = 0,
    Inhibited = 1,
    TerminatedAfterKTherapies = 2,
    TherapyExhausted = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcdsimTherapyKind {
    None = 0,
    Atp = 1,
    Shock = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcdsimZone {
    Vt1 = 0,
    Vt = 1,
    Vf1 = 2,
    Vf = 3,
}

/// A therapy prescribed by a streaming device. `kind` is `None` when the
/// sample produced no prescription.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcdsimTherapy {
    pub kind: IcdsimTherapyKind,
    pub zone: IcdsimZone,
    pub n_pulses: u32,
    pub onset_ms: f64,
    pub end_ms: f64,
}

impl IcdsimTherapy {
    const NONE: Self = Self { kind: IcdsimTherapyKind::None, zone: IcdsimZone::Vt1, n_pulses: 0, onset_ms: 0.0, end_ms: 0.0 };
}

/// Opaque scenario handle.
pub struct IcdsimScenario(Scenario);

/// Opaque episode report handle.
pub struct IcdsimReport(EpisodeReport);

/// Opaque streaming device handle.
pub struct IcdsimDevice {
    icd: Icd,
    events: Vec<Event>,
    last_pulses: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> IcdsimStatus {
    match e {
        Error::Config(_) | Error::Json(_) | Error::ElectrodeClearance { .. } => IcdsimStatus::Config,
        Error::Io(_) => IcdsimStatus::Io,
        _ => IcdsimStatus::Simulation,
    }
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (IcdsimStatus, String)>) -> IcdsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IcdsimStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside icdsim");
            IcdsimStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (IcdsimStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (IcdsimStatus, String) {
    (IcdsimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (IcdsimStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (IcdsimStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn json_err(e: serde_json::Error) -> (IcdsimStatus, String) {
    (IcdsimStatus::Config, e.to_string())
}

fn zone(z: ZoneId) -> IcdsimZone {
    match z {
        ZoneId::Vt1 => IcdsimZone::Vt1,
        ZoneId::Vt => IcdsimZone::Vt,
        ZoneId::Vf1 => IcdsimZone::Vf1,
        ZoneId::Vf => IcdsimZone::Vf,
    }
}

fn outcome(o: Outcome) -> IcdsimOutcome {
    match o {
        Outcome::NoTherapyNeeded => IcdsimOutcome::NoTherapyNeeded,
        Outcome::Inhibited => IcdsimOutcome::Inhibited,
        Outcome::TerminatedAfterKTherapies => IcdsimOutcome::TerminatedAfterKTherapies,
        Outcome::TherapyExhausted => IcdsimOutcome::TherapyExhausted,
    }
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), (IcdsimStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| (IcdsimStatus::Simulation, "string contains NUL".to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn icdsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if none.
/// Release with `icdsim_string_free`.
#[no_mangle]
pub extern "C" fn icdsim_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn icdsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a scenario JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icdsim_scenario_from_json(json: *const c_char, out: *mut *mut IcdsimScenario) -> IcdsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let scenario: Scenario = serde_json::from_str(text).map_err(json_err)?;
        scenario.validate().map_err(core_err)?;
        *out = Box::into_raw(Box::new(IcdsimScenario(scenario)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from `icdsim_scenario_from_json` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn icdsim_scenario_free(scenario: *mut IcdsimScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs a closed-loop episode. Blocks until the episode ends.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icdsim_run_closed_loop(
    scenario: *const IcdsimScenario,
    out: *mut *mut IcdsimReport,
) -> IcdsimStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let run = run_closed_loop(&s.0).map_err(core_err)?;
        *out = Box::into_raw(Box::new(IcdsimReport(run.report)));
        Ok(())
    })
}

/// Replays an EGM CSV file through the device without feedback.
/// `icd_json` and `template_json` may be NULL for defaults / no template.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL where allowed; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn icdsim_replay_csv(
    egm_path: *const c_char,
    icd_json: *const c_char,
    template_json: *const c_char,
    out: *mut *mut IcdsimReport,
) -> IcdsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = read_str(egm_path, "egm_path")?;
        let params = parse_params(icd_json)?;
        let template = if template_json.is_null() {
            None
        } else {
            Some(serde_json::from_str::<NsrTemplate>(read_str(template_json, "template_json")?).map_err(json_err)?)
        };
        let trace = EgmTrace::load_csv(std::path::Path::new(path)).map_err(core_err)?;
        let report = replay_open_loop(&trace, &params, template).map_err(core_err)?;
        *out = Box::into_raw(Box::new(IcdsimReport(report)));
        Ok(())
    })
}

unsafe fn parse_params(json: *const c_char) -> Result<IcdParams, (IcdsimStatus, String)> {
    let params = if json.is_null() {
        IcdParams::default()
    } else {
        serde_json::from_str(read_str(json, "icd_json")?).map_err(json_err)?
    };
    params.validate().map_err(core_err)?;
    Ok(params)
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn icdsim_report_outcome(report: *const IcdsimReport, out: *mut IcdsimOutcome) -> IcdsimStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = outcome(r.0.outcome);
        Ok(())
    })
}

/// Number of delivered therapies (inhibits excluded), or 0 for NULL.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn icdsim_report_therapies(report: *const IcdsimReport) -> u32 {
    report.as_ref().map_or(0, |r| r.0.therapies_delivered)
}

/// Serializes the full report as JSON.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icdsim_report_to_json(report: *const IcdsimReport, out: *mut *mut c_char) -> IcdsimStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let text = serde_json::to_string(&r.0).map_err(|e| (IcdsimStatus::Simulation, e.to_string()))?;
        write_string(out, text)
    })
}

/// # Safety
/// `report` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn icdsim_report_free(report: *mut IcdsimReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Creates a streaming device. `icd_json` (device programming) and
/// `template_json` (NSR template) may be NULL.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icdsim_device_new(
    icd_json: *const c_char,
    template_json: *const c_char,
    out: *mut *mut IcdsimDevice,
) -> IcdsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = parse_params(icd_json)?;
        let template = if template_json.is_null() {
            None
        } else {
            Some(serde_json::from_str::<NsrTemplate>(read_str(template_json, "template_json")?).map_err(json_err)?)
        };
        let dev = IcdsimDevice { icd: Icd::new(params, template), events: Vec::new(), last_pulses: Vec::new() };
        *out = Box::into_raw(Box::new(dev));
        Ok(())
    })
}

/// Feeds one EGM sample (1 ms cadence). `therapy` receives the
/// prescription, with `kind = None` if there is none.
///
/// # Safety
/// `device` must be a live handle; `therapy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icdsim_device_push_sample(
    device: *mut IcdsimDevice,
    t_ms: f64,
    nf_mv: f64,
    ff_mv: f64,
    therapy: *mut IcdsimTherapy,
) -> IcdsimStatus {
    guard(|| {
        let dev = device.as_mut().ok_or_else(|| null("device"))?;
        if therapy.is_null() {
            return Err(null("therapy"));
        }
        let d = dev.icd.on_sample(t_ms, nf_mv, ff_mv, &mut dev.events).map_err(core_err)?;
        *therapy = match d {
            None => IcdsimTherapy::NONE,
            Some(d) => {
                let z = dev.icd.therapies.last().map_or(IcdsimZone::Vt1, |r| zone(r.zone));
                let (kind, n) = match &d {
                    Delivery::Atp(s) => {
                        dev.last_pulses = s.pulse_times_ms.clone();
                        (IcdsimTherapyKind::Atp, s.pulse_times_ms.len() as u32)
                    }
                    Delivery::Shock(_) => {
                        dev.last_pulses.clear();
                        (IcdsimTherapyKind::Shock, 1)
                    }
                };
                IcdsimTherapy { kind, zone: z, n_pulses: n, onset_ms: d.onset_ms(), end_ms: d.end_ms() }
            }
        };
        Ok(())
    })
}

/// Copies the pulse onsets of the last ATP prescription into `buf`
/// (capacity `cap`) and stores the full count in `len`.
///
/// # Safety
/// `device` must be a live handle; `buf` must hold `cap` doubles (may be
/// NULL if `cap` is 0); `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icdsim_device_last_pulses(
    device: *const IcdsimDevice,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> IcdsimStatus {
    guard(|| {
        let dev = device.as_ref().ok_or_else(|| null("device"))?;
        if len.is_null() || (buf.is_null() && cap > 0) {
            return Err(null("buf/len"));
        }
        let n = dev.last_pulses.len().min(cap);
        if n > 0 {
            ptr::copy_nonoverlapping(dev.last_pulses.as_ptr(), buf, n);
        }
        *len = dev.last_pulses.len();
        Ok(())
    })
}

/// Event log so far as JSON lines.
///
/// # Safety
/// `device` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icdsim_device_events_jsonl(device: *const IcdsimDevice, out: *mut *mut c_char) -> IcdsimStatus {
    guard(|| {
        let dev = device.as_ref().ok_or_else(|| null("device"))?;
        let mut text = String::new();
        for e in &dev.events {
            text.push_str(&serde_json::to_string(e).map_err(|e| (IcdsimStatus::Simulation, e.to_string()))?);
            text.push('\n');
        }
        write_string(out, text)
    })
}

/// # Safety
/// `device` must come from `icdsim_device_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn icdsim_device_free(device: *mut IcdsimDevice) {
    if !device.is_null() {
        drop(Box::from_raw(device));
    }
}
