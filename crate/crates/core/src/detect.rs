//! Online detection and isolation with a trained model.
//!
//! The detector consumes frames in order, keeps one window buffer of
//! sign-adjusted difference-index values per channel, and alarms when the
//! weighted moving average exceeds the channel's control limit for the
//! current mode class. Buffers reset at every mode-class boundary (including
//! into and out of stopped), and each segment re-warms: the first `W - 1`
//! frames yield explicit warm-up records rather than silence.
//!
//! Alarm kinds are tied to the processing class, never to the sample values:
//! traction-class processing can only raise slip alarms and braking-class
//! processing only slide alarms.
//!
//! Also provides the plain per-sample threshold criteria (velocity difference
//! against the channel minimum/maximum plus backward-difference acceleration)
//! that production anti-slip/slide logic applies, as the comparison baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Mode, ModeClass, Trace, VelocityFrame};
use crate::model::{wma_index, DetectorModel};
use crate::vmd::vmd;

/// Alarm classification: slips surface in traction-class processing, slides
/// in braking-class processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlarmKind {
    Slip,
    Slide,
}

impl AlarmKind {
    pub fn for_class(class: ModeClass) -> AlarmKind {
        match class {
            ModeClass::Traction => AlarmKind::Slip,
            ModeClass::Braking => AlarmKind::Slide,
        }
    }

    pub fn class(self) -> ModeClass {
        match self {
            AlarmKind::Slip => ModeClass::Traction,
            AlarmKind::Slide => ModeClass::Braking,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlarmKind::Slip => "slip",
            AlarmKind::Slide => "slide",
        }
    }
}

impl std::fmt::Display for AlarmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AlarmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slip" => Ok(AlarmKind::Slip),
            "slide" => Ok(AlarmKind::Slide),
            other => Err(Error::InputDomain(format!("unknown alarm kind {other:?}"))),
        }
    }
}

/// One control-limit exceedance.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmEvent {
    pub timestamp: u64,
    /// 0-based channel index.
    pub channel: usize,
    pub kind: AlarmKind,
    pub index_value: f64,
    pub control_limit: f64,
    /// Operating mode of the frame that completed the window.
    pub mode: Mode,
}

/// Outcome of evaluating one channel at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    /// Fewer than `W` frames in the current mode-class segment; no index yet.
    WarmUp,
    Normal,
    Alarm,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::WarmUp => "warmup",
            Decision::Normal => "normal",
            Decision::Alarm => "alarm",
        }
    }
}

/// Per-frame, per-channel evaluation record; the plottable index/CL series.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub timestamp: u64,
    /// 0-based channel index.
    pub channel: usize,
    pub mode: Mode,
    /// Index value; `None` during warm-up.
    pub index: Option<f64>,
    pub control_limit: f64,
    pub decision: Decision,
}

/// Streaming detector over one frame sequence. Holds a shared reference to
/// the immutable trained model plus one window buffer per channel; state is
/// single-writer, the model can back any number of concurrent detectors.
#[derive(Debug)]
pub struct Detector<'m> {
    model: &'m DetectorModel,
    window: usize,
    current_class: Option<ModeClass>,
    /// Chronological sign-adjusted index values per channel, at most `W`.
    buffers: Vec<Vec<f64>>,
    adjusted: Vec<f64>,
}

impl<'m> Detector<'m> {
    /// Builds a detector using the `window`-length entries of the model.
    /// Every (channel, class) pair the model knows must have that window.
    pub fn new(model: &'m DetectorModel, window: usize) -> Result<Self> {
        model.validate()?;
        if !model.windows().contains(&window) {
            return Err(Error::Config(format!(
                "model has no window-{window} entries (available: {:?})",
                model.windows()
            )));
        }
        let mut classes: Vec<ModeClass> = model.entries.iter().map(|e| e.class).collect();
        classes.sort_unstable();
        classes.dedup();
        for channel in 0..model.channels {
            for &class in &classes {
                if model.entry(channel, class, window).is_none() {
                    return Err(Error::Config(format!(
                        "model is missing the (channel {}, {class}, window {window}) entry",
                        channel + 1
                    )));
                }
            }
        }
        Ok(Detector {
            model,
            window,
            current_class: None,
            buffers: vec![Vec::with_capacity(window); model.channels],
            adjusted: Vec::with_capacity(model.channels),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Processes one frame. Returns one record per channel, or an empty
    /// vector for stopped frames (which also reset the buffers).
    pub fn step(&mut self, frame: &VelocityFrame) -> Result<Vec<DetectionRecord>> {
        if frame.channels() != self.model.channels {
            return Err(Error::Incompatible(format!(
                "frame has {} channels, model expects {}",
                frame.channels(),
                self.model.channels
            )));
        }
        let class = match frame.mode.class() {
            Some(class) => class,
            None => {
                self.reset();
                return Ok(Vec::new());
            }
        };
        if self.current_class != Some(class) {
            self.reset();
            self.current_class = Some(class);
        }

        self.adjusted.clear();
        self.adjusted
            .extend(frame.velocities.iter().map(|v| class.sign() * v));

        let mut records = Vec::with_capacity(self.model.channels);
        for channel in 0..self.model.channels {
            let value = vmd(&self.adjusted, channel)?;
            let buffer = &mut self.buffers[channel];
            if buffer.len() == self.window {
                buffer.remove(0);
            }
            buffer.push(value);

            // A trace can visit a mode class the model never saw (e.g. a
            // braking frame against a traction-only model).
            let entry = self.model.entry(channel, class, self.window).ok_or_else(|| {
                Error::Incompatible(format!(
                    "frame at t={} is {}-class but the model has no {class} entries",
                    frame.timestamp, class
                ))
            })?;
            let record = if buffer.len() < self.window {
                DetectionRecord {
                    timestamp: frame.timestamp,
                    channel,
                    mode: frame.mode,
                    index: None,
                    control_limit: entry.delta,
                    decision: Decision::WarmUp,
                }
            } else {
                let index = wma_index(&entry.weights, buffer);
                let decision = if index > entry.delta {
                    Decision::Alarm
                } else {
                    Decision::Normal
                };
                DetectionRecord {
                    timestamp: frame.timestamp,
                    channel,
                    mode: frame.mode,
                    index: Some(index),
                    control_limit: entry.delta,
                    decision,
                }
            };
            records.push(record);
        }
        Ok(records)
    }

    fn reset(&mut self) {
        self.current_class = None;
        for buffer in &mut self.buffers {
            buffer.clear();
        }
    }
}

/// Runs a whole trace through a fresh detector; returns the full record
/// series and the alarms extracted from it.
pub fn detect_trace(
    model: &DetectorModel,
    trace: &Trace,
    window: usize,
) -> Result<(Vec<DetectionRecord>, Vec<AlarmEvent>)> {
    if !trace.is_empty() && trace.channels() != model.channels {
        return Err(Error::Incompatible(format!(
            "trace has {} channels, model expects {}",
            trace.channels(),
            model.channels
        )));
    }
    let relative = (trace.sample_interval_s - model.sample_interval_s).abs()
        / model.sample_interval_s.max(f64::MIN_POSITIVE);
    if relative > 0.01 {
        return Err(Error::Incompatible(format!(
            "trace sample interval {} differs from model's {} by more than 1%",
            trace.sample_interval_s, model.sample_interval_s
        )));
    }

    let mut detector = Detector::new(model, window)?;
    let mut records = Vec::new();
    let mut alarms = Vec::new();
    for frame in &trace.frames {
        let step = detector.step(frame)?;
        for record in &step {
            if record.decision == Decision::Alarm {
                let class = frame.mode.class().expect("alarm only in a mode class");
                alarms.push(AlarmEvent {
                    timestamp: record.timestamp,
                    channel: record.channel,
                    kind: AlarmKind::for_class(class),
                    index_value: record.index.expect("alarm carries an index"),
                    control_limit: record.control_limit,
                    mode: frame.mode,
                });
            }
        }
        records.extend(step);
    }
    Ok((records, alarms))
}

// ---------------------------------------------------------------------------
// Baseline threshold criteria
// ---------------------------------------------------------------------------

/// Preset thresholds for the baseline criteria: velocity-difference limits
/// `jpe`/`jbe` in km/h and acceleration limits `jpa`/`jba` in (km/h)/s, for
/// traction (`p`) and braking (`b`) respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineThresholds {
    pub jpe: f64,
    pub jpa: f64,
    pub jbe: f64,
    pub jba: f64,
}

impl Default for BaselineThresholds {
    fn default() -> Self {
        BaselineThresholds {
            jpe: 3.0,
            jpa: 5.0,
            jbe: 3.0,
            jba: 5.0,
        }
    }
}

/// Which baseline rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineCriterion {
    VelocityDifference,
    Acceleration,
}

impl BaselineCriterion {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineCriterion::VelocityDifference => "velocity_difference",
            BaselineCriterion::Acceleration => "acceleration",
        }
    }
}

/// One baseline alarm: a per-sample threshold exceedance.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineAlarm {
    pub timestamp: u64,
    /// 0-based channel index.
    pub channel: usize,
    pub kind: AlarmKind,
    pub criterion: BaselineCriterion,
    /// The quantity that exceeded the threshold (km/h or (km/h)/s).
    pub value: f64,
    pub threshold: f64,
    pub mode: Mode,
}

/// Evaluates the plain threshold criteria over a trace.
///
/// In traction/coasting a channel alarms when its difference to the channel
/// minimum exceeds `jpe` or its acceleration exceeds `jpa`; in braking when
/// its difference to the channel maximum exceeds `jbe` or its acceleration
/// falls below `-jba`. Acceleration is the two-point backward difference
/// over the sample interval; the first frame has none.
pub fn baseline_criteria(trace: &Trace, thresholds: &BaselineThresholds) -> Result<Vec<BaselineAlarm>> {
    for v in [
        thresholds.jpe,
        thresholds.jpa,
        thresholds.jbe,
        thresholds.jba,
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!(
                "baseline thresholds must be positive, got {v}"
            )));
        }
    }
    let dt = trace.sample_interval_s;
    let mut alarms = Vec::new();
    let mut prev: Option<&VelocityFrame> = None;
    for frame in &trace.frames {
        let class = frame.mode.class();
        if let Some(class) = class {
            let min = frame.velocities.iter().copied().fold(f64::INFINITY, f64::min);
            let max = frame
                .velocities
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            for (channel, &v) in frame.velocities.iter().enumerate() {
                let accel = prev.map(|p| (v - p.velocities[channel]) / dt);
                match class {
                    ModeClass::Traction => {
                        let e = v - min;
                        if e > thresholds.jpe {
                            alarms.push(BaselineAlarm {
                                timestamp: frame.timestamp,
                                channel,
                                kind: AlarmKind::Slip,
                                criterion: BaselineCriterion::VelocityDifference,
                                value: e,
                                threshold: thresholds.jpe,
                                mode: frame.mode,
                            });
                        }
                        if let Some(a) = accel {
                            if a > thresholds.jpa {
                                alarms.push(BaselineAlarm {
                                    timestamp: frame.timestamp,
                                    channel,
                                    kind: AlarmKind::Slip,
                                    criterion: BaselineCriterion::Acceleration,
                                    value: a,
                                    threshold: thresholds.jpa,
                                    mode: frame.mode,
                                });
                            }
                        }
                    }
                    ModeClass::Braking => {
                        let e = max - v;
                        if e > thresholds.jbe {
                            alarms.push(BaselineAlarm {
                                timestamp: frame.timestamp,
                                channel,
                                kind: AlarmKind::Slide,
                                criterion: BaselineCriterion::VelocityDifference,
                                value: e,
                                threshold: thresholds.jbe,
                                mode: frame.mode,
                            });
                        }
                        if let Some(a) = accel {
                            if a < -thresholds.jba {
                                alarms.push(BaselineAlarm {
                                    timestamp: frame.timestamp,
                                    channel,
                                    kind: AlarmKind::Slide,
                                    criterion: BaselineCriterion::Acceleration,
                                    value: a,
                                    threshold: thresholds.jba,
                                    mode: frame.mode,
                                });
                            }
                        }
                    }
                }
            }
        }
        prev = Some(frame);
    }
    Ok(alarms)
}
