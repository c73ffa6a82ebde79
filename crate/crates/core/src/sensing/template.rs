//! NSR morphology template and VTC scoring.

use serde::{Deserialize, Serialize};

use super::beats::{detect_beats, SensingParams};
use super::trace::EgmTrace;
use crate::error::{Error, Result};

/// Morphology window relative to the sense marker (ms).
pub const WINDOW_PRE_MS: f64 = 80.0;
pub const WINDOW_POST_MS: f64 = 120.0;
/// Fewest sensed beats a template may be built from.
pub const MIN_TEMPLATE_BEATS: usize = 5;

/// Number of samples before the marker and total window length at `dt_ms`.
pub fn window_shape(dt_ms: f64) -> (usize, usize) {
    let pre = (WINDOW_PRE_MS / dt_ms).round() as usize;
    let len = ((WINDOW_PRE_MS + WINDOW_POST_MS) / dt_ms).round() as usize + 1;
    (pre, len)
}

/// Far-field samples in the morphology window around the marker at
/// `t_marker_ms`, or `None` if the window does not fit in the trace.
pub fn morphology_window(trace: &EgmTrace, t_marker_ms: f64) -> Option<Vec<f64>> {
    let (pre, len) = window_shape(trace.dt_ms);
    let k = trace.index_of(t_marker_ms)?;
    let start = k.checked_sub(pre)?;
    trace.ff_mv.get(start..start + len).map(<[f64]>::to_vec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsrTemplate {
    pub dt_ms: f64,
    #[serde(rename = "window_mV")]
    pub window_mv: Vec<f64>,
    #[serde(rename = "peak_mV")]
    pub peak_mv: f64,
}

impl NsrTemplate {
    pub fn from_window(dt_ms: f64, window_mv: Vec<f64>) -> Self {
        let peak_mv = window_mv.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Self { dt_ms, window_mv, peak_mv }
    }

    pub fn len(&self) -> usize {
        self.window_mv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window_mv.is_empty()
    }
}

/// Averages the far-field windows of all sensed beats except the first and
/// the last. Beats whose window would run off the trace are skipped.
pub fn build_nsr_template(nsr: &EgmTrace, p: &SensingParams) -> Result<NsrTemplate> {
    let beats = detect_beats(nsr, p)?;
    if beats.len() < MIN_TEMPLATE_BEATS {
        return Err(Error::InsufficientNsrData { found: beats.len(), required: MIN_TEMPLATE_BEATS });
    }
    let windows: Vec<Vec<f64>> =
        beats[1..beats.len() - 1].iter().filter_map(|b| morphology_window(nsr, b.t_ms)).collect();
    if windows.is_empty() {
        return Err(Error::InsufficientNsrData { found: beats.len(), required: MIN_TEMPLATE_BEATS });
    }
    let (_, len) = window_shape(nsr.dt_ms);
    let mut mean = vec![0.0; len];
    for w in &windows {
        for (m, v) in mean.iter_mut().zip(w) {
            *m += v;
        }
    }
    let n = windows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(NsrTemplate::from_window(nsr.dt_ms, mean))
}

/// Zero-lag Pearson correlation of a beat window against the template.
/// A window (or template) without variance scores 0.
pub fn vtc_score(window: &[f64], template: &NsrTemplate) -> Result<f64> {
    if window.len() != template.len() {
        return Err(Error::LengthMismatch { window: window.len(), template: template.len() });
    }
    Ok(pearson(window, &template.window_mv))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| {
                let x = (i as f64 - 80.0) / 12.0;
                -x * (-x * x / 2.0).exp()
            })
            .collect()
    }

    #[test]
    fn window_length_follows_sample_period() {
        assert_eq!(window_shape(1.0), (80, 201));
        assert_eq!(window_shape(0.5), (160, 401));
    }

    #[test]
    fn self_and_negated_scores() {
        let t = NsrTemplate::from_window(1.0, bump(201));
        assert!((vtc_score(&t.window_mv, &t).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = t.window_mv.iter().map(|v| -v).collect();
        assert!((vtc_score(&neg, &t).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(vtc_score(&[2.0; 201], &t).unwrap(), 0.0);
        assert!(matches!(vtc_score(&[0.0; 10], &t), Err(Error::LengthMismatch { window: 10, template: 201 })));
    }

    #[test]
    fn template_of_identical_beats_equals_one_window() {
        let mut nf = vec![0.0; 8000];
        let mut ff = vec![0.0; 8000];
        let shape = bump(201);
        for k in 0..9 {
            let m = 300 + 800 * k;
            nf[m] = 5.0;
            for (j, s) in shape.iter().enumerate() {
                ff[m - 80 + j] = *s;
            }
        }
        let trace = EgmTrace::new(0.0, 1.0, nf, ff).unwrap();
        let t = build_nsr_template(&trace, &SensingParams::default()).unwrap();
        assert_eq!(t.window_mv.len(), 201);
        for (a, b) in t.window_mv.iter().zip(&shape) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_beats() {
        let mut nf = vec![0.0; 3000];
        nf[500] = 5.0;
        nf[1500] = 5.0;
        let trace = EgmTrace::new(0.0, 1.0, nf, vec![0.0; 3000]).unwrap();
        assert!(matches!(
            build_nsr_template(&trace, &SensingParams::default()),
            Err(Error::InsufficientNsrData { found: 2, required: 5 })
        ));
    }
}
