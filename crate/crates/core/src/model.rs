//! Offline training of the per-channel, per-mode detector model.
//!
//! For every (channel, mode class, window) combination: apply the class sign
//! to the velocities, compute the channel's difference-index series, estimate
//! its autocovariances, solve the optimal weight vector, and record two
//! control limits over the training windows — `delta` on the sign-adjusted
//! series (the alarm threshold) and `phi` on its negation (used by the
//! isolability analysis as `delta + phi`).
//!
//! Windows never straddle a mode-class boundary: the trace is segmented
//! first and both the autocovariance products and the control-limit windows
//! stay within segments. The online detector re-segments identically, so the
//! index values it computes over the training trace reproduce the training
//! windows bit for bit and can never exceed a max-policy control limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{mode_class_segments, ModeClass, Segment, Trace, VelocityFrame};
use crate::owv::{solve_owv, OwvFallback, WeightVector};
use crate::stats::{estimate_autocov_segmented, AutocovSequence};
use crate::vmd::{vmd, vmd_negated};

/// Model file format version written and accepted by this crate.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Minimum training frames per mode class: `max(100 * W, 1000)`.
pub fn required_training_frames(window: usize) -> usize {
    (100 * window).max(1000)
}

/// Control-limit policy. The default takes the exact maximum of the training
/// index values; the quantile variant is plumbing for noisy third-party data
/// and trades the zero-training-false-alarm guarantee for robustness.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "q")]
pub enum ClPolicy {
    #[default]
    Max,
    Quantile(f64),
}

impl ClPolicy {
    fn validate(self) -> Result<()> {
        if let ClPolicy::Quantile(q) = self {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::Config(format!(
                    "quantile must be in (0, 1], got {q}"
                )));
            }
        }
        Ok(())
    }
}

/// Weighted moving-average of a chronological window slice (oldest first).
/// `weights[0]` multiplies the newest sample.
///
/// Shared by training and detection so control limits and online indices go
/// through the identical floating-point evaluation order.
pub(crate) fn wma_index(weights: &WeightVector, window: &[f64]) -> f64 {
    let w = weights.window();
    debug_assert_eq!(window.len(), w);
    let mut acc = 0.0;
    for j in 0..w {
        acc += weights[j] * window[w - 1 - j];
    }
    acc
}

/// Applies `policy` to all training-window index values.
fn control_limit(policy: ClPolicy, mut values: Vec<f64>) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData(
            "no full training window inside any mode-class segment".into(),
        ));
    }
    match policy {
        ClPolicy::Max => Ok(values.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        ClPolicy::Quantile(q) => {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
            Ok(values[rank - 1])
        }
    }
}

/// Serialization helpers: channels are 1-based in every file format.
mod one_based {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(channel: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*channel as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let raw = u64::deserialize(d)?;
        if raw == 0 {
            return Err(serde::de::Error::custom("channel numbers are 1-based"));
        }
        Ok(raw as usize - 1)
    }
}

/// One trained (channel, mode class, window) record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    /// 0-based channel index in the API; 1-based in the file.
    #[serde(with = "one_based")]
    pub channel: usize,
    pub class: ModeClass,
    pub window: usize,
    pub weights: WeightVector,
    /// Alarm control limit: largest training index on the sign-adjusted
    /// series (km/h).
    pub delta: f64,
    /// Companion limit on the negated sign-adjusted series (km/h); the
    /// sufficient isolability threshold is `delta + phi`.
    pub phi: f64,
    pub acov: AutocovSequence,
    /// Every optimal weight strictly positive per the determinant test. The
    /// isolability thresholds are only guaranteed when this holds.
    pub owv_positive: bool,
    /// Present when the solver fell back to equal weights.
    pub fallback: Option<OwvFallback>,
    /// Training provenance: frames of this mode class that fed the entry.
    pub training_frames: usize,
}

impl ModelEntry {
    /// Sufficient isolability threshold `delta + phi`.
    pub fn isolability_threshold(&self) -> f64 {
        self.delta + self.phi
    }
}

/// Identifies the virtual-channel augmentation a model was trained with, so
/// detection can re-apply (or demand) the same augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum VirtualPolicyTag {
    /// Externally supplied reference series; must be supplied again at
    /// detection time.
    Reference,
    /// Consensus velocity advanced under a bounded-acceleration constraint.
    Inertial { max_accel_kmh_s: f64 },
}

/// Complete trained artifact, serialized as a versioned JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub format_version: u32,
    /// Channel count the model expects, including any virtual channel.
    #[serde(rename = "p")]
    pub channels: usize,
    pub sample_interval_s: f64,
    /// Augmentation the training trace was processed with, if any.
    pub virtual_policy: Option<VirtualPolicyTag>,
    pub cl_policy: ClPolicy,
    /// Entries sorted by (channel, class, window).
    pub entries: Vec<ModelEntry>,
}

impl DetectorModel {
    pub fn entry(&self, channel: usize, class: ModeClass, window: usize) -> Option<&ModelEntry> {
        self.entries
            .iter()
            .find(|e| e.channel == channel && e.class == class && e.window == window)
    }

    /// Distinct window lengths present, ascending.
    pub fn windows(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.entries.iter().map(|e| e.window).collect();
        w.sort_unstable();
        w.dedup();
        w
    }

    /// Structural validation after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "model format version {} not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.channels < 2 {
            return Err(Error::Incompatible(format!(
                "model declares {} channels, need at least 2",
                self.channels
            )));
        }
        if !(self.sample_interval_s.is_finite() && self.sample_interval_s > 0.0) {
            return Err(Error::Incompatible(
                "model sample interval must be positive".into(),
            ));
        }
        self.cl_policy.validate()?;
        for e in &self.entries {
            if e.channel >= self.channels {
                return Err(Error::Incompatible(format!(
                    "entry channel {} out of range for {} channels",
                    e.channel + 1,
                    self.channels
                )));
            }
            if e.window == 0 || e.window != e.weights.window() {
                return Err(Error::Incompatible(format!(
                    "entry (channel {}, {}) window {} does not match its {} weights",
                    e.channel + 1,
                    e.class,
                    e.window,
                    e.weights.window()
                )));
            }
            e.weights.validate()?;
            e.acov.validate()?;
            if !(e.delta.is_finite() && e.delta >= 0.0 && e.phi.is_finite() && e.phi >= 0.0) {
                return Err(Error::Incompatible(format!(
                    "entry (channel {}, {}) has invalid control limits ({}, {})",
                    e.channel + 1,
                    e.class,
                    e.delta,
                    e.phi
                )));
            }
        }
        Ok(())
    }
}

/// The per-segment difference-index series of one channel: `delta_series`
/// on the sign-adjusted velocities and `phi_series` on their negation.
struct ClassSeries {
    delta_series: Vec<Vec<f64>>,
    phi_series: Vec<Vec<f64>>,
    frames: usize,
}

fn class_series(
    frames: &[VelocityFrame],
    segments: &[Segment],
    class: ModeClass,
    channel: usize,
) -> Result<ClassSeries> {
    let mut delta_series = Vec::new();
    let mut phi_series = Vec::new();
    let mut count = 0usize;
    let mut adjusted: Vec<f64> = Vec::new();
    for segment in segments.iter().filter(|s| s.class == class) {
        let mut d = Vec::with_capacity(segment.len());
        let mut p = Vec::with_capacity(segment.len());
        for frame in &frames[segment.start..segment.end] {
            adjusted.clear();
            adjusted.extend(frame.velocities.iter().map(|v| class.sign() * v));
            d.push(vmd(&adjusted, channel)?);
            p.push(vmd_negated(&adjusted, channel)?);
        }
        count += segment.len();
        delta_series.push(d);
        phi_series.push(p);
    }
    Ok(ClassSeries {
        delta_series,
        phi_series,
        frames: count,
    })
}

fn windowed_indices(weights: &WeightVector, segments: &[Vec<f64>]) -> Vec<f64> {
    let w = weights.window();
    let mut values = Vec::new();
    for series in segments {
        if series.len() < w {
            continue;
        }
        for t in w - 1..series.len() {
            values.push(wma_index(weights, &series[t + 1 - w..=t]));
        }
    }
    values
}

/// Trains one (channel, mode class) entry for one window length.
pub fn train_entry(
    trace: &Trace,
    channel: usize,
    class: ModeClass,
    window: usize,
    cl_policy: ClPolicy,
) -> Result<ModelEntry> {
    cl_policy.validate()?;
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    if channel >= trace.channels() {
        return Err(Error::ChannelIndex {
            index: channel,
            channels: trace.channels(),
        });
    }
    let segments = mode_class_segments(&trace.frames);
    if !trace.is_empty() && segments.is_empty() {
        return Err(Error::DegenerateTrace(
            "every frame is stopped; nothing to train on".into(),
        ));
    }
    let series = class_series(&trace.frames, &segments, class, channel)?;
    let needed = required_training_frames(window);
    if series.frames < needed {
        return Err(Error::InsufficientData(format!(
            "{} frames in {class} class, need at least {needed} for window {window}",
            series.frames
        )));
    }

    let slices: Vec<&[f64]> = series.delta_series.iter().map(|s| s.as_slice()).collect();
    let acov = estimate_autocov_segmented(&slices, window - 1)?;
    let (weights, diagnostics) = solve_owv(&acov, window)?;

    let delta = control_limit(cl_policy, windowed_indices(&weights, &series.delta_series))?;
    let phi = control_limit(cl_policy, windowed_indices(&weights, &series.phi_series))?;

    Ok(ModelEntry {
        channel,
        class,
        window,
        weights,
        delta,
        phi,
        acov,
        owv_positive: diagnostics.all_positive(),
        fallback: diagnostics.fallback,
        training_frames: series.frames,
    })
}

/// Trains every (channel, class, window) combination present in the trace.
///
/// Mode classes with no frames at all are skipped (a traction-only trace
/// yields a traction-only model); a class that is present but underfed is an
/// error.
pub fn train_model(
    trace: &Trace,
    windows: &[usize],
    cl_policy: ClPolicy,
    virtual_policy: Option<VirtualPolicyTag>,
) -> Result<DetectorModel> {
    if windows.is_empty() {
        return Err(Error::Config("no window lengths requested".into()));
    }
    let mut sorted_windows = windows.to_vec();
    sorted_windows.sort_unstable();
    sorted_windows.dedup();

    if trace.is_empty() {
        return Err(Error::InsufficientData("empty trace".into()));
    }
    let segments = mode_class_segments(&trace.frames);
    if segments.is_empty() {
        return Err(Error::DegenerateTrace(
            "every frame is stopped; nothing to train on".into(),
        ));
    }
    let mut classes: Vec<ModeClass> = segments.iter().map(|s| s.class).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut entries = Vec::new();
    for channel in 0..trace.channels() {
        for &class in &classes {
            for &window in &sorted_windows {
                entries.push(train_entry(trace, channel, class, window, cl_policy)?);
            }
        }
    }
    let model = DetectorModel {
        format_version: MODEL_FORMAT_VERSION,
        channels: trace.channels(),
        sample_interval_s: trace.sample_interval_s,
        virtual_policy,
        cl_policy,
        entries,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Mode;

    /// A trace whose channel-1 difference index is identically `c` in
    /// traction: channel 1 rides `c` above the common base.
    fn offset_trace(n: usize, c: f64) -> Trace {
        let frames = (0..n as u64)
            .map(|t| VelocityFrame {
                timestamp: t,
                velocities: vec![50.0, 50.0 + c, 50.0, 50.0],
                mode: Mode::Traction,
            })
            .collect();
        Trace::new(0.1, frames).unwrap()
    }

    /// Deterministic wiggly trace: smooth per-channel ripples around a base
    /// speed, enough variation for a positive-variance index series.
    fn wiggly_trace(n: usize, mode: Mode) -> Trace {
        let frames = (0..n as u64)
            .map(|t| {
                let x = t as f64;
                let velocities = (0..4)
                    .map(|ch| {
                        60.0 + 0.4 * ((0.13 * x + ch as f64).sin())
                            + 0.2 * ((0.041 * x + 2.0 * ch as f64).cos())
                    })
                    .collect();
                VelocityFrame {
                    timestamp: t,
                    velocities,
                    mode,
                }
            })
            .collect();
        Trace::new(0.1, frames).unwrap()
    }

    #[test]
    fn constant_index_series_gives_cl_equal_to_offset() {
        let trace = offset_trace(1200, 2.5);
        let entry = train_entry(&trace, 1, ModeClass::Traction, 3, ClPolicy::Max).unwrap();
        assert_eq!(entry.fallback, Some(OwvFallback::DegenerateData));
        assert!((entry.delta - 2.5).abs() < 1e-12, "delta {}", entry.delta);
        // The negated series of the non-offset channels sees the offset.
        let other = train_entry(&trace, 0, ModeClass::Traction, 3, ClPolicy::Max).unwrap();
        assert_eq!(other.delta, 0.0);
        assert!((other.phi - 2.5).abs() < 1e-12);
    }

    #[test]
    fn window_one_delta_is_max_index_value() {
        let trace = wiggly_trace(1500, Mode::Traction);
        let entry = train_entry(&trace, 2, ModeClass::Traction, 1, ClPolicy::Max).unwrap();
        let expected = trace
            .frames
            .iter()
            .map(|f| vmd(&f.velocities, 2).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(entry.delta, expected);
    }

    #[test]
    fn insufficient_frames_is_an_error() {
        let trace = offset_trace(500, 1.0);
        let err = train_entry(&trace, 0, ModeClass::Traction, 1, ClPolicy::Max).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn all_stopped_trace_is_degenerate() {
        let frames = (0..1200u64)
            .map(|t| VelocityFrame {
                timestamp: t,
                velocities: vec![0.0; 4],
                mode: Mode::Stopped,
            })
            .collect();
        let trace = Trace::new(0.1, frames).unwrap();
        let err = train_entry(&trace, 0, ModeClass::Traction, 1, ClPolicy::Max).unwrap_err();
        assert!(matches!(err, Error::DegenerateTrace(_)));
        assert!(matches!(
            train_model(&trace, &[1], ClPolicy::Max, None),
            Err(Error::DegenerateTrace(_))
        ));
    }

    #[test]
    fn braking_class_uses_negated_velocities() {
        // Channel 1 rides above the rest; under braking-class processing the
        // sign flip turns that into a zero index (it is the minimum).
        let frames = (0..1200u64)
            .map(|t| VelocityFrame {
                timestamp: t,
                velocities: vec![50.0, 52.0, 50.0, 50.0],
                mode: Mode::Braking,
            })
            .collect();
        let trace = Trace::new(0.1, frames).unwrap();
        let high = train_entry(&trace, 1, ModeClass::Braking, 2, ClPolicy::Max).unwrap();
        assert_eq!(high.delta, 0.0);
        assert!((high.phi - 2.0).abs() < 1e-12);
        let low = train_entry(&trace, 0, ModeClass::Braking, 2, ClPolicy::Max).unwrap();
        assert!((low.delta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn model_covers_all_channel_class_window_combinations() {
        let mut frames = wiggly_trace(1400, Mode::Traction).frames;
        let braking = (0..1400u64).map(|t| {
            let x = (t + 1400) as f64;
            VelocityFrame {
                timestamp: t + 1400,
                velocities: (0..4)
                    .map(|ch| 40.0 + 0.4 * ((0.13 * x + ch as f64).sin()))
                    .collect(),
                mode: Mode::Braking,
            }
        });
        frames.extend(braking);
        let trace = Trace::new(0.1, frames).unwrap();
        let model = train_model(&trace, &[1, 2, 3], ClPolicy::Max, None).unwrap();
        assert_eq!(model.entries.len(), 4 * 2 * 3);
        assert_eq!(model.windows(), vec![1, 2, 3]);
        for e in &model.entries {
            assert!(e.delta >= 0.0 && e.phi >= 0.0);
        }
        assert!(model.entry(0, ModeClass::Braking, 2).is_some());
        assert!(model.entry(0, ModeClass::Braking, 4).is_none());
    }

    #[test]
    fn quantile_policy_is_below_max() {
        let trace = wiggly_trace(2000, Mode::Traction);
        let max = train_entry(&trace, 0, ModeClass::Traction, 2, ClPolicy::Max).unwrap();
        let q = train_entry(&trace, 0, ModeClass::Traction, 2, ClPolicy::Quantile(0.9)).unwrap();
        assert!(q.delta < max.delta);
        assert!(matches!(
            train_entry(&trace, 0, ModeClass::Traction, 2, ClPolicy::Quantile(1.5)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn delta_non_increasing_in_window_on_stationary_noise() {
        // A decaying positive autocovariance keeps the optimal weights
        // positive, and averaging then shrinks the training maxima.
        let profile = crate::sim::ProfileSpec {
            segments: vec![crate::sim::ProfileSegment {
                mode: Mode::Traction,
                duration_s: 300.0,
                target_speed_kmh: 60.0,
            }],
            sample_interval_s: 0.1,
            channels: 4,
        };
        let noise = crate::sim::NoiseSpec {
            sigma_kmh: 0.3,
            rho: 0.6,
            cross_correlation: 0.4,
            seed: 2024,
        };
        let trace = crate::sim::generate(&profile, &noise).unwrap();
        for ch in 0..4 {
            let mut prev = f64::INFINITY;
            for w in 1..=3 {
                let e = train_entry(&trace, ch, ModeClass::Traction, w, ClPolicy::Max).unwrap();
                assert!(e.owv_positive, "channel {ch} window {w}");
                assert!(
                    e.delta <= prev,
                    "channel {ch} window {w}: delta {} after {prev}",
                    e.delta
                );
                prev = e.delta;
            }
        }
    }
}
