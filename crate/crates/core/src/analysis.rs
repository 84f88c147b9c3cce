//! Isolability thresholds, window-length selection, and per-window fault
//! condition predictions.
//!
//! The sufficient isolability threshold of a (channel, class, window) entry
//! is `delta + phi`: any fault whose weighted mean magnitude on that channel
//! exceeds it is guaranteed to alarm, provided the optimal weights are
//! positive. The necessary conditions run the other way: a window whose
//! weighted fault index is zero for a channel cannot be isolated on that
//! channel, and a fault that hits every channel equally at every window
//! sample cannot be detected at all. [`check_conditions`] evaluates all
//! three for a planned injection so tests can compare predictions with what
//! the detector actually does.

use crate::error::{Error, Result};
use crate::frame::{mode_class_segments, ModeClass, Trace};
use crate::model::{wma_index, DetectorModel};
use crate::sim::InjectionSpec;
use crate::vmd::vmd;

/// One row of the threshold table.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolabilityEntry {
    /// 0-based channel index.
    pub channel: usize,
    pub class: ModeClass,
    pub window: usize,
    /// `delta + phi` in km/h.
    pub threshold: f64,
    /// The guarantee behind the threshold only holds when this is true.
    pub owv_positive: bool,
}

/// Sufficient isolability thresholds per (channel, class, window).
#[derive(Debug, Clone, PartialEq)]
pub struct IsolabilityTable {
    pub entries: Vec<IsolabilityEntry>,
}

impl IsolabilityTable {
    pub fn from_model(model: &DetectorModel) -> IsolabilityTable {
        let mut entries: Vec<IsolabilityEntry> = model
            .entries
            .iter()
            .map(|e| IsolabilityEntry {
                channel: e.channel,
                class: e.class,
                window: e.window,
                threshold: e.isolability_threshold(),
                owv_positive: e.owv_positive,
            })
            .collect();
        entries.sort_by_key(|e| (e.class, e.channel, e.window));
        IsolabilityTable { entries }
    }

    /// Threshold rows of one (channel, class), ascending in window length.
    pub fn rows(&self, channel: usize, class: ModeClass) -> Vec<&IsolabilityEntry> {
        self.entries
            .iter()
            .filter(|e| e.channel == channel && e.class == class)
            .collect()
    }

    pub fn classes(&self) -> Vec<ModeClass> {
        let mut c: Vec<ModeClass> = self.entries.iter().map(|e| e.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn channels(&self) -> usize {
        self.entries.iter().map(|e| e.channel + 1).max().unwrap_or(0)
    }

    pub fn windows(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.entries.iter().map(|e| e.window).collect();
        w.sort_unstable();
        w.dedup();
        w
    }
}

/// Outcome of window selection for one (channel, class).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowChoice {
    /// 0-based channel index.
    pub channel: usize,
    pub class: ModeClass,
    /// Smallest window whose threshold lies strictly below the tolerable
    /// magnitude, if any.
    pub window: Option<usize>,
    /// When no window qualifies: the smallest shortfall
    /// `threshold - f_check` across the candidates.
    pub closest_gap: Option<f64>,
    /// Some candidate row had non-positive optimal weights, so its
    /// threshold guarantee is conditional.
    pub conditional: bool,
}

/// Window selection across all channels of one class plus the combined
/// choice (the smallest window that works for every channel).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSelection {
    pub class: ModeClass,
    pub per_channel: Vec<WindowChoice>,
    pub combined: Option<usize>,
}

/// Picks, per channel and class, the smallest trained window whose
/// `delta + phi` threshold is strictly below the channel's maximum tolerable
/// fault magnitude `f_check`.
///
/// `f_check` holds one positive magnitude per channel (km/h).
pub fn select_window(model: &DetectorModel, f_check: &[f64]) -> Result<Vec<WindowSelection>> {
    if f_check.len() != model.channels {
        return Err(Error::Config(format!(
            "f_check has {} entries, model has {} channels",
            f_check.len(),
            model.channels
        )));
    }
    if let Some(bad) = f_check.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::Config(format!(
            "tolerable fault magnitudes must be positive, got {bad}"
        )));
    }
    let table = IsolabilityTable::from_model(model);
    let mut selections = Vec::new();
    for class in table.classes() {
        let mut per_channel = Vec::new();
        for (channel, &tolerable) in f_check.iter().enumerate() {
            let rows = table.rows(channel, class);
            let window = rows
                .iter()
                .filter(|e| tolerable > e.threshold)
                .map(|e| e.window)
                .min();
            let closest_gap = if window.is_none() {
                rows.iter()
                    .map(|e| e.threshold - tolerable)
                    .fold(None, |acc: Option<f64>, gap| {
                        Some(acc.map_or(gap, |a| a.min(gap)))
                    })
            } else {
                None
            };
            per_channel.push(WindowChoice {
                channel,
                class,
                window,
                closest_gap,
                conditional: rows.iter().any(|e| !e.owv_positive),
            });
        }
        let combined = per_channel
            .iter()
            .map(|c| c.window)
            .collect::<Option<Vec<usize>>>()
            .and_then(|w| w.into_iter().max());
        selections.push(WindowSelection {
            class,
            per_channel,
            combined,
        });
    }
    Ok(selections)
}

/// Predicted detectability/isolability of one full window under a planned
/// injection, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPrediction {
    /// Timestamp of the frame that completes the window.
    pub timestamp: u64,
    /// 0-based channel index.
    pub channel: usize,
    pub class: ModeClass,
    /// Weighted fault index of this channel over the window (km/h).
    pub weighted_fault: f64,
    /// Necessary isolability: the weighted fault index is nonzero. When
    /// false, the fault cannot raise an alarm on this channel.
    pub necessary_isolability: bool,
    /// Necessary detectability: some window sample's fault vector is not a
    /// common-mode shift. When false, no channel can alarm from the fault.
    pub necessary_detectability: bool,
    /// Sufficient isolability: the weighted fault index exceeds
    /// `delta + phi`, guaranteeing an alarm on this channel.
    pub sufficient_isolability: bool,
    /// The entry's optimal weights are not all positive, so the sufficient
    /// condition is conditional.
    pub conditional: bool,
}

/// Evaluates the fault conditions for every full window that overlaps an
/// injected event, using the `window`-length entries of the model.
///
/// The per-sample fault vectors are reconstructed from the injection spec in
/// the sign-adjusted domain (slips add to traction-class velocities, slides
/// subtract from braking-class ones; both appear as positive additive
/// faults after the class sign), and windows honor the same mode-class
/// segmentation as the detector.
pub fn check_conditions(
    trace: &Trace,
    spec: &InjectionSpec,
    model: &DetectorModel,
    window: usize,
) -> Result<Vec<WindowPrediction>> {
    if !trace.is_empty() && trace.channels() != model.channels {
        return Err(Error::Incompatible(format!(
            "trace has {} channels, model expects {}",
            trace.channels(),
            model.channels
        )));
    }
    let p = model.channels;
    let n = trace.len();

    // Sign-adjusted fault magnitude per sample and channel.
    let mut fault = vec![vec![0.0_f64; p]; n];
    let mut touched = vec![false; n];
    for event in &spec.events {
        if let Some(&bad) = event.channels.iter().find(|&&c| c >= p) {
            return Err(Error::ChannelIndex {
                index: bad,
                channels: p,
            });
        }
        event.magnitude.validate(event.duration_samples)?;
        let required_class = event.kind.class();
        for start in event.occurrence_starts() {
            for offset in 0..event.duration_samples {
                let t = start as usize + offset;
                if t >= n {
                    return Err(Error::InvalidSpec(format!(
                        "event occurrence at sample {start} runs past the trace"
                    )));
                }
                if trace.frames[t].mode.class() != Some(required_class) {
                    return Err(Error::InvalidSpec(format!(
                        "{} fault at sample {t} falls in {} mode",
                        event.kind, trace.frames[t].mode
                    )));
                }
                let f = event.magnitude.value_at(offset);
                if f != 0.0 {
                    touched[t] = true;
                    for &channel in &event.channels {
                        fault[t][channel] += f;
                    }
                }
            }
        }
    }

    let mut predictions = Vec::new();
    for segment in mode_class_segments(&trace.frames) {
        if segment.len() < window {
            continue;
        }
        for end in segment.start + window - 1..segment.end {
            let window_range = end + 1 - window..=end;
            if !window_range.clone().any(|t| touched[t]) {
                continue;
            }
            let class = segment.class;
            // Common-mode check: every window sample's fault vector is a
            // multiple of the all-ones vector (zero vectors included).
            let all_common_mode = window_range.clone().all(|t| {
                let row = &fault[t];
                row.iter().all(|&f| f == row[0])
            });
            for channel in 0..p {
                let entry = model.entry(channel, class, window).ok_or_else(|| {
                    Error::Config(format!(
                        "model is missing the (channel {}, {class}, window {window}) entry",
                        channel + 1
                    ))
                })?;
                // Chronological per-sample fault index of this channel.
                let series: Vec<f64> = window_range
                    .clone()
                    .map(|t| vmd(&fault[t], channel))
                    .collect::<Result<_>>()?;
                let weighted_fault = wma_index(&entry.weights, &series);
                predictions.push(WindowPrediction {
                    timestamp: trace.frames[end].timestamp,
                    channel,
                    class,
                    weighted_fault,
                    necessary_isolability: weighted_fault != 0.0,
                    necessary_detectability: !all_common_mode,
                    sufficient_isolability: weighted_fault > entry.isolability_threshold(),
                    conditional: !entry.owv_positive,
                });
            }
        }
    }
    Ok(predictions)
}
