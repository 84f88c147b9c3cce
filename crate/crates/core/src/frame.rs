//! Velocity frames, operating modes and mode-class segmentation.
//!
//! A trace is a sequence of timestamped frames, each carrying one velocity
//! sample per wheelset channel plus the operating mode. Detection and
//! training never mix samples across a mode-class boundary: traction and
//! coasting form one class, braking another, and stopped frames belong to
//! neither.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Velocity magnitude below which a frame may legally claim `Stopped` mode.
pub const STOPPED_TOLERANCE_KMH: f64 = 0.1;

/// Operating mode attached to each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Traction,
    Coasting,
    Braking,
    Stopped,
}

impl Mode {
    /// The model family this mode is processed with. Coasting shares the
    /// traction-mode model; stopped frames are not processed at all.
    pub fn class(self) -> Option<ModeClass> {
        match self {
            Mode::Traction | Mode::Coasting => Some(ModeClass::Traction),
            Mode::Braking => Some(ModeClass::Braking),
            Mode::Stopped => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Traction => "traction",
            Mode::Coasting => "coasting",
            Mode::Braking => "braking",
            Mode::Stopped => "stopped",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traction" => Ok(Mode::Traction),
            "coasting" => Ok(Mode::Coasting),
            "braking" => Ok(Mode::Braking),
            "stopped" => Ok(Mode::Stopped),
            other => Err(Error::InputDomain(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model family: traction-class (slip monitoring, sign +1) or braking-class
/// (slide monitoring, sign -1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeClass {
    Traction,
    Braking,
}

impl ModeClass {
    /// Sign applied to velocities before computing the difference index:
    /// +1 in traction-class processing, -1 in braking-class processing.
    pub fn sign(self) -> f64 {
        match self {
            ModeClass::Traction => 1.0,
            ModeClass::Braking => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeClass::Traction => "traction",
            ModeClass::Braking => "braking",
        }
    }
}

impl std::fmt::Display for ModeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped multichannel velocity sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityFrame {
    /// Monotone sample index.
    pub timestamp: u64,
    /// Wheelset velocities in km/h, one per channel.
    pub velocities: Vec<f64>,
    pub mode: Mode,
}

impl VelocityFrame {
    pub fn channels(&self) -> usize {
        self.velocities.len()
    }
}

/// A validated sequence of frames sharing one channel count and sample
/// interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub sample_interval_s: f64,
    pub frames: Vec<VelocityFrame>,
}

impl Trace {
    /// Builds a trace, checking the frame invariants: at least two channels,
    /// constant channel count, finite values, strictly increasing timestamps,
    /// and stopped frames at (near) zero velocity. `row` in errors refers to
    /// the 1-based position of the offending frame plus one header row, so it
    /// matches CSV line numbers.
    pub fn new(sample_interval_s: f64, frames: Vec<VelocityFrame>) -> Result<Self> {
        if !(sample_interval_s.is_finite() && sample_interval_s > 0.0) {
            return Err(Error::InputDomain(format!(
                "sample interval must be positive and finite, got {sample_interval_s}"
            )));
        }
        let mut prev_t: Option<u64> = None;
        let mut channels: Option<usize> = None;
        for (pos, frame) in frames.iter().enumerate() {
            let row = pos as u64 + 2;
            match channels {
                None => {
                    if frame.channels() < 2 {
                        return Err(Error::Ingestion {
                            row,
                            message: format!("need at least 2 channels, got {}", frame.channels()),
                        });
                    }
                    channels = Some(frame.channels());
                }
                Some(p) if frame.channels() != p => {
                    return Err(Error::Ingestion {
                        row,
                        message: format!("channel count changed from {p} to {}", frame.channels()),
                    });
                }
                _ => {}
            }
            if let Some(prev) = prev_t {
                if frame.timestamp <= prev {
                    return Err(Error::Ingestion {
                        row,
                        message: format!(
                            "timestamps must be strictly increasing ({prev} then {})",
                            frame.timestamp
                        ),
                    });
                }
            }
            prev_t = Some(frame.timestamp);
            for (ch, &v) in frame.velocities.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Ingestion {
                        row,
                        message: format!("non-finite velocity {v} on channel {}", ch + 1),
                    });
                }
                if frame.mode == Mode::Stopped && v.abs() > STOPPED_TOLERANCE_KMH {
                    return Err(Error::Ingestion {
                        row,
                        message: format!(
                            "stopped frame carries velocity {v} km/h on channel {} \
                             (tolerance {STOPPED_TOLERANCE_KMH})",
                            ch + 1
                        ),
                    });
                }
            }
        }
        Ok(Trace {
            sample_interval_s,
            frames,
        })
    }

    /// Channel count, or 0 for an empty trace.
    pub fn channels(&self) -> usize {
        self.frames.first().map_or(0, VelocityFrame::channels)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A maximal run of consecutive frames sharing one mode class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub class: ModeClass,
    /// Frame index range `start..end` into the trace.
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Splits a trace into contiguous mode-class segments. Stopped frames break
/// segments and are not part of any segment; a traction-to-coasting change
/// does not break a segment (both are traction-class).
pub fn mode_class_segments(frames: &[VelocityFrame]) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut current: Option<Segment> = None;
    for (idx, frame) in frames.iter().enumerate() {
        match frame.mode.class() {
            Some(class) => match current {
                Some(ref mut seg) if seg.class == class => seg.end = idx + 1,
                _ => {
                    if let Some(seg) = current.take() {
                        segments.push(seg);
                    }
                    current = Some(Segment {
                        class,
                        start: idx,
                        end: idx + 1,
                    });
                }
            },
            None => {
                if let Some(seg) = current.take() {
                    segments.push(seg);
                }
            }
        }
    }
    if let Some(seg) = current {
        segments.push(seg);
    }
    segments
}
