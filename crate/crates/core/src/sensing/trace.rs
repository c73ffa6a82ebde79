//! Two-channel electrogram traces and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sample period (1 kHz).
pub const DEFAULT_SAMPLE_MS: f64 = 1.0;

/// Relative slack allowed when checking that CSV timestamps sit on the grid.
const CADENCE_TOL: f64 = 1e-6;

/// Uniformly sampled near-field (tip–ring) and far-field (coil–can) EGM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgmTrace {
    pub t0_ms: f64,
    pub dt_ms: f64,
    #[serde(rename = "nf_mV")]
    pub nf_mv: Vec<f64>,
    #[serde(rename = "ff_mV")]
    pub ff_mv: Vec<f64>,
}

impl EgmTrace {
    pub fn new(t0_ms: f64, dt_ms: f64, nf_mv: Vec<f64>, ff_mv: Vec<f64>) -> Result<Self> {
        let trace = Self { t0_ms, dt_ms, nf_mv, ff_mv };
        trace.validate()?;
        Ok(trace)
    }

    pub fn empty(t0_ms: f64, dt_ms: f64) -> Self {
        Self { t0_ms, dt_ms, nf_mv: Vec::new(), ff_mv: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_ms.is_finite() && self.dt_ms > 0.0) {
            return Err(Error::InvalidTrace(format!("sample period {} ms", self.dt_ms)));
        }
        if !self.t0_ms.is_finite() {
            return Err(Error::InvalidTrace("non-finite start time".into()));
        }
        if self.nf_mv.len() != self.ff_mv.len() {
            return Err(Error::InvalidTrace(format!(
                "channel lengths differ ({} near-field, {} far-field)",
                self.nf_mv.len(),
                self.ff_mv.len()
            )));
        }
        check_finite("nf_mV", &self.nf_mv)?;
        check_finite("ff_mV", &self.ff_mv)
    }

    pub fn len(&self) -> usize {
        self.nf_mv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nf_mv.is_empty()
    }

    /// Timestamp of sample `i`.
    #[inline]
    pub fn time_of(&self, i: usize) -> f64 {
        self.t0_ms + i as f64 * self.dt_ms
    }

    /// Time just past the last sample.
    pub fn end_ms(&self) -> f64 {
        self.time_of(self.len())
    }

    /// Index of the sample at `t_ms`, if it lies on the sampling grid and
    /// within the trace.
    pub fn index_of(&self, t_ms: f64) -> Option<usize> {
        let k = ((t_ms - self.t0_ms) / self.dt_ms).round();
        (k >= 0.0 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn push(&mut self, nf: f64, ff: f64) {
        self.nf_mv.push(nf);
        self.ff_mv.push(ff);
    }

    /// Appends `other`, which must start exactly one sample after `self` ends.
    pub fn append(&mut self, other: &EgmTrace) -> Result<()> {
        if other.dt_ms != self.dt_ms {
            return Err(Error::InvalidTrace("sample periods differ".into()));
        }
        if !other.is_empty() {
            let expected = self.end_ms();
            if (other.t0_ms - expected).abs() > CADENCE_TOL * self.dt_ms.max(expected.abs()) {
                return Err(Error::CadenceGap { expected_ms: expected, found_ms: other.t0_ms });
            }
        }
        self.nf_mv.extend_from_slice(&other.nf_mv);
        self.ff_mv.extend_from_slice(&other.ff_mv);
        Ok(())
    }

    /// Drops every sample at or after `t_ms`.
    pub fn truncate_at(&mut self, t_ms: f64) {
        let keep = ((t_ms - self.t0_ms) / self.dt_ms).ceil().max(0.0) as usize;
        self.nf_mv.truncate(keep);
        self.ff_mv.truncate(keep);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Csv { line: 0, message: e.to_string() };
        out.write_record(["t_ms", "nf_mV", "ff_mV"]).map_err(csv_err)?;
        for i in 0..self.len() {
            out.write_record(&[
                fmt_num(self.time_of(i)),
                fmt_num(self.nf_mv[i]),
                fmt_num(self.ff_mv[i]),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Parses `t_ms,nf_mV,ff_mV` rows. The sample period is taken from the
    /// first two rows and every later row must stay on that grid.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::Csv { line: 1, message: e.to_string() })?;
        let names: Vec<&str> = headers.iter().collect();
        if names != ["t_ms", "nf_mV", "ff_mV"] {
            return Err(Error::Csv {
                line: 1,
                message: format!("expected header t_ms,nf_mV,ff_mV, found {}", names.join(",")),
            });
        }
        let mut times = Vec::new();
        let mut trace = EgmTrace::empty(0.0, DEFAULT_SAMPLE_MS);
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 3 {
                return Err(Error::Csv { line, message: format!("expected 3 fields, found {}", record.len()) });
            }
            let mut vals = [0.0; 3];
            for (slot, (field, name)) in vals.iter_mut().zip(record.iter().zip(["t_ms", "nf_mV", "ff_mV"])) {
                *slot = field.parse::<f64>().map_err(|_| Error::Csv {
                    line,
                    message: format!("{name}: cannot parse `{field}` as a number"),
                })?;
                if !slot.is_finite() {
                    return Err(Error::Csv { line, message: format!("{name}: non-finite value") });
                }
            }
            match times.len() {
                0 => trace.t0_ms = vals[0],
                1 => {
                    trace.dt_ms = vals[0] - trace.t0_ms;
                    if trace.dt_ms <= 0.0 {
                        return Err(Error::Csv { line, message: "timestamps must increase".into() });
                    }
                }
                n => {
                    let expected = trace.time_of(n);
                    if (vals[0] - expected).abs() > CADENCE_TOL * trace.dt_ms.max(expected.abs()) {
                        return Err(Error::Csv {
                            line,
                            message: format!("expected t_ms = {expected}, found {}", vals[0]),
                        });
                    }
                }
            }
            times.push(vals[0]);
            trace.push(vals[1], vals[2]);
        }
        Ok(trace)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn check_finite(channel: &'static str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFiniteSample { channel, index }),
        None => Ok(()),
    }
}

/// Shortest representation that parses back to the same float.
fn fmt_num(x: f64) -> String {
    let s = format!("{x}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EgmTrace {
        EgmTrace::new(10.0, 1.0, vec![0.0, 1.5, -2.25, 0.125], vec![0.5, 0.25, 0.0, -1.0]).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_ms,nf_mV,ff_mV\n10,0,0.5\n"));
        assert_eq!(EgmTrace::read_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "t_ms,nf_mV,ff_mV\n0,1,2\n1,x,2\n";
        match EgmTrace::read_csv(bad.as_bytes()).unwrap_err() {
            Error::Csv { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("nf_mV"));
            }
            e => panic!("unexpected {e:?}"),
        }
        let gap = "t_ms,nf_mV,ff_mV\n0,1,2\n1,1,2\n3,1,2\n";
        assert!(matches!(EgmTrace::read_csv(gap.as_bytes()), Err(Error::Csv { line: 4, .. })));
        let header = "t,nf,ff\n0,1,2\n";
        assert!(matches!(EgmTrace::read_csv(header.as_bytes()), Err(Error::Csv { line: 1, .. })));
    }

    #[test]
    fn validation() {
        assert!(EgmTrace::new(0.0, 1.0, vec![0.0], vec![]).is_err());
        assert!(EgmTrace::new(0.0, 0.0, vec![], vec![]).is_err());
        let err = EgmTrace::new(0.0, 1.0, vec![0.0, f64::NAN], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { channel: "nf_mV", index: 1 }));
    }

    #[test]
    fn append_requires_contiguous_samples() {
        let mut a = sample();
        let next = EgmTrace::new(14.0, 1.0, vec![1.0], vec![1.0]).unwrap();
        a.append(&next).unwrap();
        assert_eq!(a.len(), 5);
        let late = EgmTrace::new(16.0, 1.0, vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(a.append(&late), Err(Error::CadenceGap { .. })));
        a.truncate_at(12.0);
        assert_eq!(a.len(), 2);
        assert_eq!(a.index_of(11.0), Some(1));
        assert_eq!(a.index_of(12.0), None);
    }
}
