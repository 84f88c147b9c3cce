//! Synthetic multichannel wheelset-velocity traces with intermittent fault
//! injection.
//!
//! Generation is two-layered: a piecewise-linear base speed curve from an
//! ordered list of (mode, duration, target speed) segments, plus a
//! stationary per-channel perturbation that is first-order autoregressive in
//! time and equicorrelated across channels. Everything is driven by one
//! seeded ChaCha stream, so equal seeds give bit-identical traces.
//!
//! Injection is purely additive at the velocity level: slips add the
//! magnitude to the listed channels, slides subtract it. Events carry exact
//! per-sample ground-truth labels for scoring; slides that would push a
//! velocity below zero are clamped at zero and the affected labels are
//! marked, since additivity no longer holds there.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detect::AlarmKind;
use crate::error::{Error, Result};
use crate::frame::{Mode, Trace, VelocityFrame};

/// One leg of the speed profile: hold `mode` for `duration_s` while the base
/// speed ramps linearly to `target_speed_kmh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSegment {
    pub mode: Mode,
    pub duration_s: f64,
    pub target_speed_kmh: f64,
}

/// Ordered speed profile. The base curve starts at 0 km/h and each segment
/// ramps continuously from the previous segment's end speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub segments: Vec<ProfileSegment>,
    pub sample_interval_s: f64,
    /// Wheelset channel count.
    #[serde(default = "default_channels")]
    pub channels: usize,
}

fn default_channels() -> usize {
    4
}

/// Stationary perturbation parameters: per-channel marginal standard
/// deviation, lag-1 autocorrelation and cross-channel equicorrelation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_kmh: f64,
    pub rho: f64,
    pub cross_correlation: f64,
    pub seed: u64,
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        if !(self.sigma_kmh.is_finite() && self.sigma_kmh >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "sigma must be nonnegative, got {}",
                self.sigma_kmh
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidSpec(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !(0.0..1.0).contains(&self.cross_correlation) {
            return Err(Error::InvalidSpec(format!(
                "cross correlation must lie in [0, 1), got {}",
                self.cross_correlation
            )));
        }
        Ok(())
    }
}

/// Per-sample fault magnitude over an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum MagnitudeProfile {
    /// Same magnitude at every event sample.
    Constant(f64),
    /// One magnitude per event sample; length must equal the duration.
    Samples(Vec<f64>),
}

impl MagnitudeProfile {
    /// Magnitude at a 0-based offset into the event.
    pub fn value_at(&self, offset: usize) -> f64 {
        match self {
            MagnitudeProfile::Constant(f) => *f,
            MagnitudeProfile::Samples(v) => v[offset],
        }
    }

    pub(crate) fn validate(&self, duration: usize) -> Result<()> {
        let check = |f: f64| {
            if !(f.is_finite() && f >= 0.0) {
                Err(Error::InvalidSpec(format!(
                    "fault magnitudes must be finite and nonnegative, got {f}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            MagnitudeProfile::Constant(f) => check(*f),
            MagnitudeProfile::Samples(v) => {
                if v.len() != duration {
                    return Err(Error::InvalidSpec(format!(
                        "magnitude profile has {} samples, event lasts {duration}",
                        v.len()
                    )));
                }
                v.iter().copied().try_for_each(check)
            }
        }
    }
}

fn default_repeat() -> usize {
    1
}

/// One intermittent fault event, optionally repeated with a gap. Slip events
/// must lie wholly inside traction/coasting samples, slides inside braking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionEvent {
    /// 0-based channels the fault acts on.
    pub channels: Vec<usize>,
    pub kind: AlarmKind,
    pub start_sample: u64,
    pub duration_samples: usize,
    pub magnitude: MagnitudeProfile,
    /// Number of occurrences (an event train); 1 means a single event.
    #[serde(default = "default_repeat")]
    pub repeat: usize,
    /// Fault-free samples between consecutive occurrences.
    #[serde(default)]
    pub gap_samples: usize,
}

impl InjectionEvent {
    /// Start samples of every occurrence of this event train.
    pub fn occurrence_starts(&self) -> impl Iterator<Item = u64> + '_ {
        let stride = (self.duration_samples + self.gap_samples) as u64;
        (0..self.repeat as u64).map(move |r| self.start_sample + r * stride)
    }
}

/// Full intermittent-fault description for one trace.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub events: Vec<InjectionEvent>,
}

/// Ground-truth record: the fault magnitude actually applied to one channel
/// at one sample (the realized `faulty - fault_free` difference, so scoring
/// against it is exact even where clamping bent the requested magnitude).
#[derive(Debug, Clone, PartialEq)]
pub struct FaultLabel {
    pub timestamp: u64,
    /// 0-based channel index.
    pub channel: usize,
    /// Magnitude in km/h, positive for both slips and slides.
    pub magnitude: f64,
    /// The slide hit the zero-velocity floor; additivity is broken here.
    pub clamped: bool,
}

/// Result of injecting faults into a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionOutcome {
    pub trace: Trace,
    pub labels: Vec<FaultLabel>,
    /// Number of clamped samples across all events.
    pub clamp_warnings: usize,
}

/// Generates a fault-free trace from a profile and noise description.
pub fn generate(profile: &ProfileSpec, noise: &NoiseSpec) -> Result<Trace> {
    if profile.channels < 2 {
        return Err(Error::InvalidSpec(format!(
            "need at least 2 channels, got {}",
            profile.channels
        )));
    }
    if !(profile.sample_interval_s.is_finite() && profile.sample_interval_s > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "sample interval must be positive, got {}",
            profile.sample_interval_s
        )));
    }
    if profile.segments.is_empty() {
        return Err(Error::InvalidSpec("profile has no segments".into()));
    }
    noise.validate()?;

    let p = profile.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let sqrt_common = noise.cross_correlation.sqrt();
    let sqrt_own = (1.0 - noise.cross_correlation).sqrt();
    let innovation_scale = (1.0 - noise.rho * noise.rho).sqrt();

    let draw_correlated = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let common: f64 = rng.sample(StandardNormal);
        (0..p)
            .map(|_| {
                let own: f64 = rng.sample(StandardNormal);
                sqrt_common * common + sqrt_own * own
            })
            .collect()
    };

    // Stationary start: the AR(1) marginal is standard normal.
    let mut state = draw_correlated(&mut rng);

    let mut frames = Vec::new();
    let mut speed = 0.0_f64;
    let mut t = 0u64;
    for (idx, segment) in profile.segments.iter().enumerate() {
        if !(segment.target_speed_kmh.is_finite() && segment.target_speed_kmh >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "segment {idx}: target speed must be nonnegative, got {}",
                segment.target_speed_kmh
            )));
        }
        if segment.mode == Mode::Stopped {
            if segment.target_speed_kmh != 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "segment {idx}: stopped segments must target 0 km/h"
                )));
            }
            if speed.abs() > 1e-9 {
                return Err(Error::InvalidSpec(format!(
                    "segment {idx}: stopped segment follows speed {speed} km/h \
                     (profiles must brake to 0 first)"
                )));
            }
        }
        let n = (segment.duration_s / profile.sample_interval_s).round() as usize;
        if n == 0 {
            return Err(Error::InvalidSpec(format!(
                "segment {idx}: duration {} s is shorter than one sample",
                segment.duration_s
            )));
        }
        let start_speed = speed;
        for s in 1..=n {
            let base = start_speed
                + (segment.target_speed_kmh - start_speed) * s as f64 / n as f64;
            // The perturbation state advances every sample, stopped or not,
            // so the noise stream stays stationary across station stops.
            let innovations = draw_correlated(&mut rng);
            for (x, w) in state.iter_mut().zip(&innovations) {
                *x = noise.rho * *x + innovation_scale * w;
            }
            let velocities: Vec<f64> = if segment.mode == Mode::Stopped {
                vec![0.0; p]
            } else {
                state.iter().map(|x| base + noise.sigma_kmh * x).collect()
            };
            frames.push(VelocityFrame {
                timestamp: t,
                velocities,
                mode: segment.mode,
            });
            t += 1;
        }
        speed = segment.target_speed_kmh;
    }
    Trace::new(profile.sample_interval_s, frames)
}

/// Applies an injection spec to a fault-free trace. Overlapping events of
/// the same kind superpose additively; each (sample, channel) yields at most
/// one label carrying the total realized magnitude.
pub fn inject(trace: &Trace, spec: &InjectionSpec) -> Result<InjectionOutcome> {
    let p = trace.channels();
    let n = trace.len() as u64;
    let mut faulty = trace.clone();
    let mut clamped_at: Vec<(u64, usize)> = Vec::new();

    for (idx, event) in spec.events.iter().enumerate() {
        if event.channels.is_empty() {
            return Err(Error::InvalidSpec(format!("event {idx}: no channels listed")));
        }
        if let Some(&bad) = event.channels.iter().find(|&&c| c >= p) {
            return Err(Error::ChannelIndex {
                index: bad,
                channels: p,
            });
        }
        if event.duration_samples == 0 {
            return Err(Error::InvalidSpec(format!(
                "event {idx}: duration must be at least 1 sample"
            )));
        }
        if event.repeat == 0 {
            return Err(Error::InvalidSpec(format!(
                "event {idx}: repeat must be at least 1"
            )));
        }
        event.magnitude.validate(event.duration_samples)?;
        let required_class = event.kind.class();

        for start in event.occurrence_starts() {
            let end = start + event.duration_samples as u64;
            if end > n {
                return Err(Error::InvalidSpec(format!(
                    "event {idx}: occurrence {start}..{end} runs past the trace ({n} samples)"
                )));
            }
            for offset in 0..event.duration_samples {
                let t = (start + offset as u64) as usize;
                let frame = &mut faulty.frames[t];
                if frame.mode.class() != Some(required_class) {
                    return Err(Error::InvalidSpec(format!(
                        "event {idx}: {} fault at sample {t} falls in {} mode",
                        event.kind, frame.mode
                    )));
                }
                let f = event.magnitude.value_at(offset);
                if f == 0.0 {
                    continue;
                }
                for &channel in &event.channels {
                    let current = frame.velocities[channel];
                    frame.velocities[channel] = match event.kind {
                        AlarmKind::Slip => current + f,
                        AlarmKind::Slide => {
                            let v = current - f;
                            if v < 0.0 {
                                clamped_at.push((frame.timestamp, channel));
                                0.0
                            } else {
                                v
                            }
                        }
                    };
                }
            }
        }
    }

    // Ground truth from the realized difference, one label per touched
    // (sample, channel).
    let mut labels = Vec::new();
    for (clean, dirty) in trace.frames.iter().zip(&faulty.frames) {
        for (channel, (&a, &b)) in clean.velocities.iter().zip(&dirty.velocities).enumerate() {
            if a != b {
                labels.push(FaultLabel {
                    timestamp: clean.timestamp,
                    channel,
                    magnitude: (b - a).abs(),
                    clamped: clamped_at.contains(&(clean.timestamp, channel)),
                });
            }
        }
    }
    let clamp_warnings = clamped_at.len();
    Ok(InjectionOutcome {
        trace: faulty,
        labels,
        clamp_warnings,
    })
}
