use std::io::{self, Read, Write};

use serde::Serialize;
use thiserror::Error;

pub const TRACE_HEADER: &str = "frequency_hz,power_dbm";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no data rows")]
    Empty,
    #[error("point {index}: frequency {frequency} does not increase")]
    NotIncreasing { index: usize, frequency: f64 },
    #[error("point {index}: non-finite value")]
    NonFinite { index: usize },
    #[error("noise floor spans {floor_lo}..{floor_hi} Hz but trace spans {lo}..{hi} Hz")]
    FloorCoverage {
        floor_lo: f64,
        floor_hi: f64,
        lo: f64,
        hi: f64,
    },
    #[error("noise floor is at or above the signal at every point")]
    FloorAboveSignal,
    #[error("{0}")]
    Io(String),
}

/// Spectrum-analyzer trace: strictly increasing frequencies with powers in
/// dBm. A power of `-inf` (zero linear power) is allowed so that an absent
/// floor can be written as a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumTrace {
    points: Vec<(f64, f64)>,
    pub rbw_hz: Option<f64>,
    pub label: Option<String>,
}

impl SpectrumTrace {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, TraceError> {
        if points.is_empty() {
            return Err(TraceError::Empty);
        }
        for (index, &(f, p)) in points.iter().enumerate() {
            if !f.is_finite() || p.is_nan() || p == f64::INFINITY {
                return Err(TraceError::NonFinite { index });
            }
            if index > 0 && f <= points[index - 1].0 {
                return Err(TraceError::NotIncreasing {
                    index,
                    frequency: f,
                });
            }
        }
        Ok(SpectrumTrace {
            points,
            rbw_hz: None,
            label: None,
        })
    }

    pub fn from_columns(frequencies_hz: &[f64], powers_dbm: &[f64]) -> Result<Self, TraceError> {
        assert_eq!(frequencies_hz.len(), powers_dbm.len(), "column lengths differ");
        Self::new(frequencies_hz.iter().copied().zip(powers_dbm.iter().copied()).collect())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_rbw(mut self, rbw_hz: f64) -> Self {
        self.rbw_hz = Some(rbw_hz);
        self
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn powers_dbm(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn span_hz(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Linear power (mW) at `f`, interpolated linearly in linear power.
    /// `None` outside the span.
    pub fn linear_power_at(&self, f: f64) -> Option<f64> {
        let (lo, hi) = self.span_hz();
        if f < lo || f > hi {
            return None;
        }
        let k = self.points.partition_point(|p| p.0 < f);
        let (f1, p1) = self.points[k];
        if f1 == f || k == 0 {
            return Some(dbm_to_mw(p1));
        }
        let (f0, p0) = self.points[k - 1];
        let w = (f - f0) / (f1 - f0);
        Some((1.0 - w) * dbm_to_mw(p0) + w * dbm_to_mw(p1))
    }
}

pub fn dbm_to_mw(p: f64) -> f64 {
    10f64.powf(p / 10.0)
}

pub fn mw_to_dbm(p: f64) -> f64 {
    10.0 * p.log10()
}

fn parse_err(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses trace CSV. Lines starting with `#` are comments; `# rbw_hz=...`
/// and `# label=...` set metadata. The first other line must be the
/// `frequency_hz,power_dbm` header.
pub fn parse_trace(text: &str) -> Result<SpectrumTrace, TraceError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut rbw_hz = None;
    let mut label = None;
    for (i, raw) in text.lines().enumerate() {
        let Some(comment) = raw.strip_prefix('#') else {
            continue;
        };
        let Some((key, value)) = comment.split_once('=') else {
            continue;
        };
        match key.trim() {
            "rbw_hz" => {
                let v = value.trim();
                match v.parse::<f64>() {
                    Ok(x) if x > 0.0 && x.is_finite() => rbw_hz = Some(x),
                    _ => return Err(parse_err(i + 1, format!("rbw_hz `{v}` is not a positive number"))),
                }
            }
            "label" => label = Some(value.trim().to_string()),
            _ => {}
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(1, |p| p.line() as usize);
        parse_err(line, e.to_string())
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    let header_line = header.position().map_or(1, |p| p.line() as usize);
    if header.iter().collect::<Vec<_>>() != ["frequency_hz", "power_dbm"] {
        return Err(parse_err(header_line, format!("expected header `{TRACE_HEADER}`")));
    }

    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut last_line = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let f: f64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("frequency `{}` is not a number", &record[0])))?;
        let p: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("power `{}` is not a number", &record[1])))?;
        if !f.is_finite() || f < 0.0 {
            return Err(parse_err(line, "frequency must be finite and non-negative"));
        }
        if p.is_nan() || p == f64::INFINITY {
            return Err(parse_err(line, "power must be finite or -inf"));
        }
        if let Some(&(last, _)) = points.last() {
            if f == last {
                return Err(parse_err(line, format!("duplicate frequency {f} (first on line {last_line})")));
            }
            if f < last {
                return Err(parse_err(line, format!("frequency {f} is below the previous row")));
            }
        }
        last_line = line;
        points.push((f, p));
    }
    let mut trace = SpectrumTrace::new(points)?;
    trace.rbw_hz = rbw_hz;
    trace.label = label;
    Ok(trace)
}

pub fn load_trace<R: Read>(mut source: R) -> Result<SpectrumTrace, TraceError> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| TraceError::Io(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let upto = &e.as_bytes()[..e.utf8_error().valid_up_to()];
        let line = upto.iter().filter(|&&b| b == b'\n').count() + 1;
        parse_err(line, "invalid UTF-8")
    })?;
    parse_trace(&text)
}

pub fn write_trace<W: Write>(trace: &SpectrumTrace, mut w: W) -> io::Result<()> {
    if let Some(rbw) = trace.rbw_hz {
        writeln!(w, "# rbw_hz={rbw}")?;
    }
    if let Some(label) = &trace.label {
        writeln!(w, "# label={}", label.replace(['\n', '\r'], " "))?;
    }
    writeln!(w, "{TRACE_HEADER}")?;
    for (f, p) in &trace.points {
        writeln!(w, "{f},{p}")?;
    }
    Ok(())
}

/// `start, start+step, ...` up to and including `stop` (within rounding).
pub fn stepped_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && stop >= start, "empty or reversed grid");
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

/// Result of floor subtraction: the corrected trace and the frequencies
/// dropped because the floor reached the signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorCorrected {
    pub trace: SpectrumTrace,
    pub dropped_hz: Vec<f64>,
}

fn check_coverage(trace: &SpectrumTrace, floor: &SpectrumTrace) -> Result<(), TraceError> {
    let (lo, hi) = trace.span_hz();
    let (floor_lo, floor_hi) = floor.span_hz();
    if floor_lo > lo || floor_hi < hi {
        return Err(TraceError::FloorCoverage {
            floor_lo,
            floor_hi,
            lo,
            hi,
        });
    }
    Ok(())
}

/// Pointwise linear-power subtraction of the detection floor.
pub fn subtract_noise_floor(
    trace: &SpectrumTrace,
    floor: &SpectrumTrace,
) -> Result<FloorCorrected, TraceError> {
    check_coverage(trace, floor)?;
    let mut kept = Vec::with_capacity(trace.len());
    let mut dropped_hz = Vec::new();
    for &(f, p) in trace.points() {
        let n = floor.linear_power_at(f).expect("coverage checked");
        let s = dbm_to_mw(p);
        if n >= s {
            dropped_hz.push(f);
        } else {
            kept.push((f, if n == 0.0 { p } else { mw_to_dbm(s - n) }));
        }
    }
    if kept.is_empty() {
        return Err(TraceError::FloorAboveSignal);
    }
    let mut out = SpectrumTrace::new(kept)?;
    out.rbw_hz = trace.rbw_hz;
    out.label = trace.label.clone();
    Ok(FloorCorrected {
        trace: out,
        dropped_hz,
    })
}

/// Inverse of [`subtract_noise_floor`] on retained points.
pub fn add_noise_floor(trace: &SpectrumTrace, floor: &SpectrumTrace) -> Result<SpectrumTrace, TraceError> {
    check_coverage(trace, floor)?;
    let points = trace
        .points()
        .iter()
        .map(|&(f, p)| {
            let n = floor.linear_power_at(f).expect("coverage checked");
            (f, if n == 0.0 { p } else { mw_to_dbm(dbm_to_mw(p) + n) })
        })
        .collect();
    let mut out = SpectrumTrace::new(points)?;
    out.rbw_hz = trace.rbw_hz;
    out.label = trace.label.clone();
    Ok(out)
}

/// How far (dB) a floor must sit below the signal for subtraction to
/// deepen the signal by `correction_db`. The relation is its own inverse,
/// so this also gives the correction produced by a floor `margin` dB down.
pub fn floor_margin_for_correction(correction_db: f64) -> f64 {
    -10.0 * (1.0 - 10f64.powf(-correction_db / 10.0)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parses_header_metadata_and_rows() {
        let t = parse_trace("# rbw_hz=30000\n# label=run 7\n# other note\nfrequency_hz,power_dbm\n1e6,-80\n2e6, -81.5\n\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rbw_hz, Some(30000.0));
        assert_eq!(t.label.as_deref(), Some("run 7"));
        assert_eq!(t.points()[1], (2e6, -81.5));
    }

    #[test]
    fn duplicate_frequency_names_line() {
        let err = parse_trace("frequency_hz,power_dbm\n1,-80\n2,-80\n2,-81\n").unwrap_err();
        match err {
            TraceError::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("line 3"), "{message}");
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn rejects_malformed_rows() {
        let cases = [
            ("frequency_hz,power_dbm\n1,abc\n", 2),
            ("frequency_hz,power_dbm\n1,-80,3\n", 2),
            ("frequency_hz,power_dbm\n2,-80\n1,-80\n", 3),
            ("frequency_hz,power_dbm\nNaN,-80\n", 2),
            ("freq,power\n1,-80\n", 1),
            ("# rbw_hz=-3\nfrequency_hz,power_dbm\n", 1),
        ];
        for (text, want) in cases {
            match parse_trace(text) {
                Err(TraceError::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert_eq!(parse_trace("frequency_hz,power_dbm\n"), Err(TraceError::Empty));
        assert!(matches!(parse_trace(""), Err(TraceError::Parse { .. })));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let t = SpectrumTrace::from_columns(&[5e5, 5.3e5, 1.0 / 3.0 + 6e5], &[-80.123456789, -79.0, f64::NEG_INFINITY])
            .unwrap()
            .with_rbw(3e4)
            .with_label("x");
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        assert_eq!(load_trace(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn default_grid_has_317_points() {
        let g = stepped_grid(0.5e6, 10e6, 30e3);
        assert_eq!(g.len(), 317);
        assert!(*g.last().unwrap() <= 10e6);
        assert_eq!(stepped_grid(0.0, 1.0, 0.25).len(), 5);
    }

    #[test]
    fn floor_correction_arithmetic() {
        let t = SpectrumTrace::new(vec![(1e6, -84.5)]).unwrap();
        let floor = SpectrumTrace::new(vec![(0.0, -94.5), (2e6, -94.5)]).unwrap();
        let c = subtract_noise_floor(&t, &floor).unwrap();
        let shift = t.points()[0].1 - c.trace.points()[0].1;
        assert_abs_diff_eq!(shift, 0.458, epsilon = 1e-3);
        assert_abs_diff_eq!(floor_margin_for_correction(0.5), 9.64, epsilon = 5e-3);
        assert_abs_diff_eq!(floor_margin_for_correction(floor_margin_for_correction(0.5)), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn absent_floor_is_identity() {
        let t = SpectrumTrace::new(vec![(1e6, -84.5), (2e6, -80.0)]).unwrap();
        let floor = SpectrumTrace::new(vec![(0.0, f64::NEG_INFINITY), (1e7, f64::NEG_INFINITY)]).unwrap();
        let c = subtract_noise_floor(&t, &floor).unwrap();
        assert_eq!(c.trace, t);
        assert!(c.dropped_hz.is_empty());
    }

    #[test]
    fn floor_drops_and_errors() {
        let t = SpectrumTrace::new(vec![(1.0, -90.0), (2.0, -80.0)]).unwrap();
        let floor = SpectrumTrace::new(vec![(0.0, -85.0), (3.0, -85.0)]).unwrap();
        let c = subtract_noise_floor(&t, &floor).unwrap();
        assert_eq!(c.dropped_hz, vec![1.0]);
        assert_eq!(c.trace.len(), 1);

        let high = SpectrumTrace::new(vec![(0.0, -70.0), (3.0, -70.0)]).unwrap();
        assert_eq!(subtract_noise_floor(&t, &high), Err(TraceError::FloorAboveSignal));
        let short = SpectrumTrace::new(vec![(1.5, -100.0), (3.0, -100.0)]).unwrap();
        assert!(matches!(subtract_noise_floor(&t, &short), Err(TraceError::FloorCoverage { .. })));
    }

    #[test]
    fn floor_interpolates_in_linear_power() {
        let floor = SpectrumTrace::new(vec![(0.0, -90.0), (2.0, -80.0)]).unwrap();
        let mid = floor.linear_power_at(1.0).unwrap();
        assert_abs_diff_eq!(mid, (1e-9 + 1e-8) / 2.0, epsilon = 1e-22);
        assert_eq!(floor.linear_power_at(2.5), None);
    }
}
