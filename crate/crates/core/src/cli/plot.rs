//! Minimal SVG plots of a run: the EGM with therapy markers and the sensed
//! ventricular period over time against the zone thresholds.

use std::fmt::Write as _;

use icdsim_core::device::{DetectionParams, ZoneId};
use icdsim_core::orchestrator::{Event, EventKind};
use icdsim_core::sensing::EgmTrace;

const W: f64 = 1000.0;
const H: f64 = 300.0;
const PAD: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        PAD + (v - self.x0) / (self.x1 - self.x0).max(1e-9) * (W - 2.0 * PAD)
    }
    fn y(&self, v: f64) -> f64 {
        H - PAD - (v - self.y0) / (self.y1 - self.y0).max(1e-9) * (H - 2.0 * PAD)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{PAD}" y="20" font-size="13">{title}</text>"#);
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, b, t) = (PAD, W - PAD, H - PAD, PAD);
    let _ = writeln!(out, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 8.0);
    let _ = writeln!(out, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">{ylabel}</text>"#, H / 2.0, H / 2.0);
    let _ = writeln!(out, r#"<text x="{l}" y="{}" text-anchor="middle">{:.0}</text>"#, b + 14.0, f.x0);
    let _ = writeln!(out, r#"<text x="{r}" y="{}" text-anchor="middle">{:.0}</text>"#, b + 14.0, f.x1);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.1}</text>"#, l - 4.0, b, f.y0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.1}</text>"#, l - 4.0, t + 4.0, f.y1);
}

fn therapy_times(events: &[Event]) -> Vec<(f64, String)> {
    events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Therapy { kind, scheme, .. } => {
                let label = match scheme {
                    Some(s) => format!("{s:?}"),
                    None => format!("{kind:?}"),
                };
                Some((e.t_ms, label))
            }
            _ => None,
        })
        .collect()
}

/// Near-field channel with a vertical marker per therapy decision.
pub fn egm_svg(trace: &EgmTrace, events: &[Event]) -> String {
    let mut out = String::new();
    header(&mut out, "Near-field EGM");
    if trace.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let peak = trace.nf_mv.iter().fold(1e-6_f64, |m, v| m.max(v.abs()));
    let f = Frame { x0: trace.t0_ms, x1: trace.end_ms(), y0: -peak, y1: peak };
    axes(&mut out, &f, "t (ms)", "mV");
    // One point per pixel column is plenty; keep the extreme of each bucket.
    let cols = (W - 2.0 * PAD) as usize;
    let per = (trace.len() / cols).max(1);
    let mut d = String::new();
    for (c, chunk) in trace.nf_mv.chunks(per).enumerate() {
        let v = chunk.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let t = trace.time_of(c * per);
        let _ = write!(d, "{}{:.1} {:.1} ", if c == 0 { "M" } else { "L" }, f.x(t), f.y(v));
    }
    let _ = writeln!(out, r#"<path d="{d}" stroke="steelblue" fill="none" stroke-width="0.8"/>"#);
    for (t, label) in therapy_times(events) {
        let x = f.x(t);
        let _ = writeln!(out, r#"<line x1="{x:.1}" y1="{PAD}" x2="{x:.1}" y2="{}" stroke="crimson" stroke-dasharray="4 3"/>"#, H - PAD);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" fill="crimson">{label}</text>"#, x + 3.0, PAD + 10.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Sensed periods over time with the zone thresholds as shaded bands.
pub fn period_svg(events: &[Event], p: &DetectionParams) -> String {
    let mut out = String::new();
    header(&mut out, "Ventricular period");
    let pts: Vec<(f64, f64)> = events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Sense { period_ms: Some(period), .. } => Some((e.t_ms, period)),
            _ => None,
        })
        .collect();
    let (x0, x1) = match (events.first(), events.last()) {
        (Some(a), Some(b)) => (a.t_ms, b.t_ms.max(a.t_ms + 1.0)),
        _ => (0.0, 1.0),
    };
    let ymax = pts.iter().fold(1000.0_f64, |m, p| m.max(p.1));
    let f = Frame { x0, x1, y0: 0.0, y1: ymax };
    axes(&mut out, &f, "t (ms)", "period (ms)");
    let colours = ["#fff3cd", "#ffe0b2", "#ffccbc", "#f8bbd0"];
    let mut upper = p.th_ms[ZoneId::Vt1];
    for (z, colour) in ZoneId::ALL.into_iter().zip(colours) {
        let lower = if z == ZoneId::Vf { 0.0 } else { p.th_ms[next_faster(z)] };
        let (ya, yb) = (f.y(upper), f.y(lower));
        let _ = writeln!(
            out,
            r#"<rect x="{PAD}" y="{ya:.1}" width="{}" height="{:.1}" fill="{colour}"/><text x="{}" y="{:.1}" text-anchor="end">{z}</text>"#,
            W - 2.0 * PAD,
            yb - ya,
            W - PAD - 4.0,
            ya + 12.0
        );
        upper = lower;
    }
    for (t, period) in &pts {
        let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="2" fill="black"/>"#, f.x(*t), f.y(*period));
    }
    for (t, _) in therapy_times(events) {
        let x = f.x(t);
        let _ = writeln!(out, r#"<line x1="{x:.1}" y1="{PAD}" x2="{x:.1}" y2="{}" stroke="crimson" stroke-dasharray="4 3"/>"#, H - PAD);
    }
    out.push_str("</svg>\n");
    out
}

fn next_faster(z: ZoneId) -> ZoneId {
    match z {
        ZoneId::Vt1 => ZoneId::Vt,
        ZoneId::Vt => ZoneId::Vf1,
        _ => ZoneId::Vf,
    }
}
