//! File formats: CSV traces, labels, alarm logs and index series; JSON
//! scenario specs and model files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back parses to the identical bits and rewriting a file reproduces it
//! byte for byte. Channel numbers are 1-based in every file (matching the
//! `v1..vp` headers) and 0-based in the API; the conversion happens here.
//! Ingestion errors carry 1-based row numbers counting the header as row 1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{AlarmEvent, AlarmKind, BaselineAlarm, DetectionRecord};
use crate::error::{Error, Result};
use crate::frame::{Mode, Trace, VelocityFrame};
use crate::model::DetectorModel;
use crate::sim::{FaultLabel, InjectionSpec, NoiseSpec, ProfileSpec};

/// Simulation scenario: profile and noise, plus an optional injection plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub profile: ProfileSpec,
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<InjectionSpec>,
}

fn ingestion(row: u64, message: impl Into<String>) -> Error {
    Error::Ingestion {
        row,
        message: message.into(),
    }
}

fn parse_f64(field: &str, row: u64, what: &str) -> Result<f64> {
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| ingestion(row, format!("cannot parse {what} {field:?}")))?;
    if !value.is_finite() {
        return Err(ingestion(row, format!("non-finite {what} {field:?}")));
    }
    Ok(value)
}

fn parse_u64(field: &str, row: u64, what: &str) -> Result<u64> {
    field
        .trim()
        .parse()
        .map_err(|_| ingestion(row, format!("cannot parse {what} {field:?}")))
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Writes a trace as CSV with header `t,v1..vp,mode`.
pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let p = trace.channels();
    let mut header = vec!["t".to_string()];
    header.extend((1..=p).map(|i| format!("v{i}")));
    header.push("mode".to_string());
    writer.write_record(&header)?;
    for frame in &trace.frames {
        let mut record = vec![frame.timestamp.to_string()];
        record.extend(frame.velocities.iter().map(|v| format!("{v}")));
        record.push(frame.mode.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads and validates a trace CSV. The sample interval is not stored in the
/// file; the caller supplies it (simulation scenarios and models carry it).
pub fn read_trace(path: &Path, sample_interval_s: f64) -> Result<Trace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(File::open(path)?));

    let headers = reader.headers()?.clone();
    if headers.len() < 4 || headers.get(0) != Some("t") || headers.get(headers.len() - 1) != Some("mode")
    {
        return Err(ingestion(
            1,
            format!("expected header t,v1..vp,mode; got {headers:?}"),
        ));
    }
    let p = headers.len() - 2;

    let mut frames = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx as u64 + 2;
        let record = record?;
        if record.len() != p + 2 {
            return Err(ingestion(
                row,
                format!("expected {} columns, got {}", p + 2, record.len()),
            ));
        }
        let timestamp = parse_u64(&record[0], row, "timestamp")?;
        let mut velocities = Vec::with_capacity(p);
        for ch in 0..p {
            velocities.push(parse_f64(&record[ch + 1], row, "velocity")?);
        }
        let mode: Mode = record[p + 1]
            .trim()
            .parse()
            .map_err(|e: Error| ingestion(row, e.to_string()))?;
        frames.push(VelocityFrame {
            timestamp,
            velocities,
            mode,
        });
    }
    Trace::new(sample_interval_s, frames)
}

// ---------------------------------------------------------------------------
// Ground-truth labels
// ---------------------------------------------------------------------------

/// Writes fault labels as CSV with header `t,channel,f_value` (channels
/// 1-based).
pub fn write_labels(path: &Path, labels: &[FaultLabel]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "channel", "f_value"])?;
    for label in labels {
        writer.write_record(&[
            label.timestamp.to_string(),
            (label.channel + 1).to_string(),
            format!("{}", label.magnitude),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a label CSV back; `clamped` flags are not part of the file format
/// and come back false.
pub fn read_labels(path: &Path) -> Result<Vec<FaultLabel>> {
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx as u64 + 2;
        let record = record?;
        if record.len() != 3 {
            return Err(ingestion(
                row,
                format!("expected 3 columns, got {}", record.len()),
            ));
        }
        let channel = parse_u64(&record[1], row, "channel")? as usize;
        if channel == 0 {
            return Err(ingestion(row, "channel numbers are 1-based"));
        }
        labels.push(FaultLabel {
            timestamp: parse_u64(&record[0], row, "timestamp")?,
            channel: channel - 1,
            magnitude: parse_f64(&record[2], row, "magnitude")?,
            clamped: false,
        });
    }
    Ok(labels)
}

// ---------------------------------------------------------------------------
// Alarm logs and index series
// ---------------------------------------------------------------------------

/// Writes the alarm log: `timestamp,channel,kind,index_value,control_limit,
/// mode`, channels 1-based.
pub fn write_alarms(path: &Path, alarms: &[AlarmEvent]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "timestamp",
        "channel",
        "kind",
        "index_value",
        "control_limit",
        "mode",
    ])?;
    for a in alarms {
        writer.write_record(&[
            a.timestamp.to_string(),
            (a.channel + 1).to_string(),
            a.kind.to_string(),
            format!("{}", a.index_value),
            format!("{}", a.control_limit),
            a.mode.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads an alarm log written by [`write_alarms`].
pub fn read_alarms(path: &Path) -> Result<Vec<AlarmEvent>> {
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut alarms = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx as u64 + 2;
        let record = record?;
        if record.len() != 6 {
            return Err(ingestion(
                row,
                format!("expected 6 columns, got {}", record.len()),
            ));
        }
        let channel = parse_u64(&record[1], row, "channel")? as usize;
        if channel == 0 {
            return Err(ingestion(row, "channel numbers are 1-based"));
        }
        let kind: AlarmKind = record[2]
            .parse()
            .map_err(|e: Error| ingestion(row, e.to_string()))?;
        let mode: Mode = record[5]
            .parse()
            .map_err(|e: Error| ingestion(row, e.to_string()))?;
        alarms.push(AlarmEvent {
            timestamp: parse_u64(&record[0], row, "timestamp")?,
            channel: channel - 1,
            kind,
            index_value: parse_f64(&record[3], row, "index value")?,
            control_limit: parse_f64(&record[4], row, "control limit")?,
            mode,
        });
    }
    Ok(alarms)
}

/// Writes the per-sample index/CL series for external plotting:
/// `t,channel,mode,index,control_limit,decision`. Warm-up rows carry an
/// empty index field.
pub fn write_index_series(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "channel", "mode", "index", "control_limit", "decision"])?;
    for r in records {
        writer.write_record(&[
            r.timestamp.to_string(),
            (r.channel + 1).to_string(),
            r.mode.to_string(),
            r.index.map_or(String::new(), |v| format!("{v}")),
            format!("{}", r.control_limit),
            r.decision.as_str().to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes baseline alarms: `timestamp,channel,kind,criterion,value,threshold,
/// mode`.
pub fn write_baseline_alarms(path: &Path, alarms: &[BaselineAlarm]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "timestamp",
        "channel",
        "kind",
        "criterion",
        "value",
        "threshold",
        "mode",
    ])?;
    for a in alarms {
        writer.write_record(&[
            a.timestamp.to_string(),
            (a.channel + 1).to_string(),
            a.kind.to_string(),
            a.criterion.as_str().to_string(),
            format!("{}", a.value),
            format!("{}", a.threshold),
            a.mode.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Models and scenarios
// ---------------------------------------------------------------------------

/// Writes the model as pretty-printed JSON. Field order follows the struct
/// definitions and floats use shortest round-trip formatting, so equal
/// models serialize to identical bytes.
pub fn write_model(path: &Path, model: &DetectorModel) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, model)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Reads and structurally validates a model file.
pub fn read_model(path: &Path) -> Result<DetectorModel> {
    let model: DetectorModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    model.validate()?;
    Ok(model)
}

/// Reads a scenario spec from JSON.
pub fn read_scenario(path: &Path) -> Result<ScenarioSpec> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes a scenario spec as pretty-printed JSON.
pub fn write_scenario(path: &Path, scenario: &ScenarioSpec) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, scenario)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Reads a single-column CSV (header `v`) holding an external reference
/// velocity series for the virtual channel.
pub fn read_reference_series(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut series = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx as u64 + 2;
        let record = record?;
        if record.len() != 1 {
            return Err(ingestion(
                row,
                format!("expected 1 column, got {}", record.len()),
            ));
        }
        series.push(parse_f64(&record[0], row, "reference velocity")?);
    }
    Ok(series)
}
