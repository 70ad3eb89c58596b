//! File formats.
//!
//! | file | format |
//! |------|--------|
//! | trace | CSV `t_ms,ax,ay,az`, timestamps non-decreasing |
//! | magnitudes | CSV `t_ms,a_raw,a_smoothed`, smoothed blank during warm-up |
//! | transitions | CSV `t_ms,onset_t_ms,kind` with kind `STOP` or `MOVING` |
//! | events | JSONL `{"t_ms", "kind", "station_id"?, "fraction"?}` |
//! | truth | JSONL, one [`TruthStop`] per line |
//!
//! Line numbers in errors are 1-based and count the header.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{MotionTransition, TransitionKind};
use crate::pipeline::Processed;
use crate::signal::AccelSample;
use crate::simulate::{GroundTruth, TruthStop};
use crate::trip::{TripEvent, TripEventKind};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("{0}")]
    Header(String),
}

impl FormatError {
    fn row(line: u64, message: impl Into<String>) -> Self {
        FormatError::Row {
            line,
            message: message.into(),
        }
    }

    /// True for failures of the underlying reader or writer rather than of
    /// the content.
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io(_))
    }
}

fn csv_error(e: csv::Error) -> FormatError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FormatError::Io(io),
        other => FormatError::row(line, format!("{other:?}")),
    }
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), FormatError> {
    let header = rdr.headers().map_err(csv_error)?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(FormatError::Header(format!(
            "expected header {}, got {}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<f64, FormatError> {
    let raw = rec
        .get(i)
        .ok_or_else(|| FormatError::row(line, format!("missing {name}")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| FormatError::row(line, format!("{name}: cannot parse {raw:?}")))
}

pub fn read_trace<R: Read>(reader: R) -> Result<Vec<AccelSample>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    expect_header(&mut rdr, &["t_ms", "ax", "ay", "az"])?;
    let mut out: Vec<AccelSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let sample = AccelSample {
            t_ms: field(&rec, 0, "t_ms", line)?,
            x: field(&rec, 1, "ax", line)?,
            y: field(&rec, 2, "ay", line)?,
            z: field(&rec, 3, "az", line)?,
        };
        sample
            .validate()
            .map_err(|e| FormatError::row(line, e.to_string()))?;
        if let Some(prev) = out.last() {
            if sample.t_ms < prev.t_ms {
                return Err(FormatError::row(
                    line,
                    format!(
                        "t_ms {} is earlier than the previous row ({})",
                        sample.t_ms, prev.t_ms
                    ),
                ));
            }
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_trace<W: Write>(writer: W, trace: &[AccelSample]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_ms", "ax", "ay", "az"])
        .map_err(csv_error)?;
    for s in trace {
        w.write_record([
            s.t_ms.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            s.z.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_magnitudes<W: Write>(writer: W, processed: &Processed) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_ms", "a_raw", "a_smoothed"])
        .map_err(csv_error)?;
    for (raw, sm) in processed.raw.iter().zip(&processed.smoothed) {
        let sm = sm.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([raw.t_ms.to_string(), raw.a.to_string(), sm])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One magnitudes row: timestamp, raw and smoothed magnitude.
pub type MagnitudeRow = (f64, f64, Option<f64>);

pub fn read_magnitudes<R: Read>(reader: R) -> Result<Vec<MagnitudeRow>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    expect_header(&mut rdr, &["t_ms", "a_raw", "a_smoothed"])?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let sm = match rec.get(2) {
                Some("") | None => None,
                Some(_) => Some(field(&rec, 2, "a_smoothed", line)?),
            };
            Ok((
                field(&rec, 0, "t_ms", line)?,
                field(&rec, 1, "a_raw", line)?,
                sm,
            ))
        })
        .collect()
}

pub fn write_transitions<W: Write>(
    writer: W,
    transitions: &[MotionTransition],
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_ms", "onset_t_ms", "kind"])
        .map_err(csv_error)?;
    for t in transitions {
        w.write_record([
            t.t_ms.to_string(),
            t.onset_t_ms.to_string(),
            t.kind.as_str().to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a transitions file. The sample index is not stored and comes back
/// as the row position.
pub fn read_transitions<R: Read>(reader: R) -> Result<Vec<MotionTransition>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    expect_header(&mut rdr, &["t_ms", "onset_t_ms", "kind"])?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let raw = rec.get(2).unwrap_or("");
            let kind = TransitionKind::parse(raw)
                .ok_or_else(|| FormatError::row(line, format!("unknown kind {raw:?}")))?;
            Ok(MotionTransition {
                t_ms: field(&rec, 0, "t_ms", line)?,
                onset_t_ms: field(&rec, 1, "onset_t_ms", line)?,
                kind,
                index: i as u64,
            })
        })
        .collect()
}

/// Flat form of a [`TripEvent`] as stored in event logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_ms: i64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
}

impl From<&TripEvent> for EventRecord {
    fn from(ev: &TripEvent) -> Self {
        let (station_id, fraction) = match &ev.kind {
            TripEventKind::StationArrival { station_id }
            | TripEventKind::ApproachingStation { station_id }
            | TripEventKind::ArrivedAtDestination { station_id } => {
                (Some(station_id.clone()), None)
            }
            TripEventKind::InBetweenStop { fraction } => (None, Some(*fraction)),
            TripEventKind::Departed | TripEventKind::UnexpectedExtraStop => (None, None),
        };
        EventRecord {
            t_ms: ev.t_ms.round() as i64,
            kind: ev.kind.name().to_string(),
            station_id,
            fraction,
        }
    }
}

pub fn write_events<W: Write>(mut writer: W, events: &[TripEvent]) -> Result<(), FormatError> {
    for ev in events {
        serde_json::to_writer(&mut writer, &EventRecord::from(ev)).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| FormatError::row(i as u64 + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<EventRecord>, FormatError> {
    read_jsonl(reader)
}

pub fn write_truth<W: Write>(mut writer: W, truth: &GroundTruth) -> Result<(), FormatError> {
    for s in &truth.stops {
        serde_json::to_writer(&mut writer, s).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_truth<R: BufRead>(reader: R) -> Result<GroundTruth, FormatError> {
    let stops: Vec<TruthStop> = read_jsonl(reader)?;
    let truth = GroundTruth { stops };
    truth
        .validate()
        .map_err(|e| FormatError::Header(e.to_string()))?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorParams;
    use crate::pipeline::process_trace;
    use crate::signal::AxisBias;
    use crate::trip::StopClass;

    #[test]
    fn trace_round_trip() {
        let trace = vec![
            AccelSample::new(0.0, 0.1, -0.2, 0.3).unwrap(),
            AccelSample::new(20.0, 1e-7, 0.0, -4.25).unwrap(),
            AccelSample::new(40.5, 0.1 + 0.2, 1.0 / 3.0, 0.0).unwrap(),
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert!(buf.starts_with(b"t_ms,ax,ay,az\n0,0.1,-0.2,0.3\n"));
        assert_eq!(read_trace(&buf[..]).unwrap(), trace);
    }

    #[test]
    fn bad_rows_name_their_line() {
        let text = "t_ms,ax,ay,az\n0,0,0,0\n20,NaN,0,0\n";
        match read_trace(text.as_bytes()) {
            Err(FormatError::Row { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("NaN"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = "t_ms,ax,ay,az\n0,0,0,0\n20,0,0\n";
        assert!(matches!(
            read_trace(text.as_bytes()),
            Err(FormatError::Row { line: 3, .. })
        ));
        let text = "t_ms,ax,ay,az\n40,0,0,0\n20,0,0,0\n";
        assert!(matches!(
            read_trace(text.as_bytes()),
            Err(FormatError::Row { line: 3, .. })
        ));
        let text = "t,x,y,z\n";
        assert!(matches!(
            read_trace(text.as_bytes()),
            Err(FormatError::Header(_))
        ));
        let text = "t_ms,ax,ay,az\n0,abc,0,0\n";
        assert!(matches!(
            read_trace(text.as_bytes()),
            Err(FormatError::Row { line: 2, .. })
        ));
    }

    #[test]
    fn magnitudes_and_transitions_round_trip() {
        let mut trace = Vec::new();
        for k in 0..1200 {
            let a = if (200..900).contains(&k) { 0.6 } else { 0.0 };
            trace.push(AccelSample::new(k as f64 * 20.0, a, 0.0, 0.0).unwrap());
        }
        let p = process_trace(&trace, &DetectorParams::worldwide(), &AxisBias::default()).unwrap();
        assert_eq!(p.transitions.len(), 1);

        let mut buf = Vec::new();
        write_magnitudes(&mut buf, &p).unwrap();
        let rows = read_magnitudes(&buf[..]).unwrap();
        assert_eq!(rows.len(), trace.len());
        assert_eq!(rows[0].2, None);
        assert_eq!(rows[99].2, Some(0.0));
        assert!(String::from_utf8(buf)
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(','));

        let mut buf = Vec::new();
        write_transitions(&mut buf, &p.transitions).unwrap();
        let back = read_transitions(&buf[..]).unwrap();
        assert_eq!(back[0].t_ms, p.transitions[0].t_ms);
        assert_eq!(back[0].kind, TransitionKind::MovingDetected);

        let mut empty = Vec::new();
        write_transitions(&mut empty, &[]).unwrap();
        assert_eq!(empty, b"t_ms,onset_t_ms,kind\n");
    }

    #[test]
    fn events_and_truth_round_trip() {
        let events = vec![
            TripEvent {
                t_ms: 1000.4,
                kind: TripEventKind::Departed,
            },
            TripEvent {
                t_ms: 5000.0,
                kind: TripEventKind::InBetweenStop { fraction: 0.4 },
            },
            TripEvent {
                t_ms: 9000.0,
                kind: TripEventKind::ArrivedAtDestination {
                    station_id: "C".into(),
                },
            },
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"t_ms":1000,"kind":"departed"}"#
        );
        let back = read_events(&buf[..]).unwrap();
        assert_eq!(back[1].fraction, Some(0.4));
        assert_eq!(back[2].station_id.as_deref(), Some("C"));

        let truth = GroundTruth {
            stops: vec![TruthStop {
                onset_ms: 0.0,
                end_ms: 100.0,
                label: StopClass::StationStop,
                station_id: Some("A".into()),
                fraction: None,
                start: true,
            }],
        };
        let mut buf = Vec::new();
        write_truth(&mut buf, &truth).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"onset_ms\":0.0,\"end_ms\":100.0,\"label\":\"station_stop\",\"station_id\":\"A\",\"start\":true}\n"
        );
        assert_eq!(read_truth(&buf[..]).unwrap(), truth);
    }
}
