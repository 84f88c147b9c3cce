//! Virtual reference channel.
//!
//! A fault hitting every wheelset equally shifts all velocities together and
//! leaves every difference index at zero — undetectable by construction. An
//! extra reference channel that tracks the vehicle rather than the wheels
//! restores detectability: the faulted channels then differ from it.
//!
//! Two policies are offered, both interpretations of a reference velocity
//! "based on the velocity and inertia of the vehicle":
//! - [`VirtualPolicy::Reference`]: an externally supplied series (e.g. from
//!   an independent speed source).
//! - [`VirtualPolicy::Inertial`]: the per-frame consensus (median) velocity,
//!   rate-limited by a maximum plausible vehicle acceleration, so short
//!   wheel-level faults cannot drag it along.

use crate::error::{Error, Result};
use crate::frame::{Mode, Trace};
use crate::model::VirtualPolicyTag;

/// How the appended reference channel is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum VirtualPolicy {
    /// Externally supplied series, one velocity per frame.
    Reference(Vec<f64>),
    /// Median consensus advanced under a bounded acceleration (km/h per
    /// second).
    Inertial { max_accel_kmh_s: f64 },
}

impl VirtualPolicy {
    /// The serializable tag stored in a model file.
    pub fn tag(&self) -> VirtualPolicyTag {
        match self {
            VirtualPolicy::Reference(_) => VirtualPolicyTag::Reference,
            VirtualPolicy::Inertial { max_accel_kmh_s } => VirtualPolicyTag::Inertial {
                max_accel_kmh_s: *max_accel_kmh_s,
            },
        }
    }
}

/// Median of a non-empty slice; for even counts, the mean of the two middle
/// values.
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Appends the virtual channel to every frame of a trace.
pub fn virtual_wheelset(trace: &Trace, policy: &VirtualPolicy) -> Result<Trace> {
    let mut frames = trace.frames.clone();
    match policy {
        VirtualPolicy::Reference(series) => {
            if series.len() != frames.len() {
                return Err(Error::InputDomain(format!(
                    "reference series has {} samples, trace has {}",
                    series.len(),
                    frames.len()
                )));
            }
            for (frame, &v) in frames.iter_mut().zip(series) {
                if !v.is_finite() {
                    return Err(Error::InputDomain(format!(
                        "non-finite reference velocity {v}"
                    )));
                }
                frame.velocities.push(v);
            }
        }
        VirtualPolicy::Inertial { max_accel_kmh_s } => {
            if !(max_accel_kmh_s.is_finite() && *max_accel_kmh_s > 0.0) {
                return Err(Error::InputDomain(format!(
                    "max acceleration must be positive, got {max_accel_kmh_s}"
                )));
            }
            let max_step = max_accel_kmh_s * trace.sample_interval_s;
            let mut estimate: Option<f64> = None;
            for frame in frames.iter_mut() {
                let value = if frame.mode == Mode::Stopped {
                    // At rest the vehicle speed is known exactly.
                    estimate = Some(0.0);
                    0.0
                } else {
                    let consensus = median(&frame.velocities);
                    let next = match estimate {
                        // The reference can only change as fast as the
                        // vehicle itself plausibly accelerates.
                        Some(prev) => prev + (consensus - prev).clamp(-max_step, max_step),
                        None => consensus,
                    };
                    estimate = Some(next);
                    next
                };
                frame.velocities.push(value);
            }
        }
    }
    Trace::new(trace.sample_interval_s, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::VelocityFrame;
    use crate::vmd::vmd;

    fn trace_from(rows: &[(&[f64], Mode)]) -> Trace {
        let frames = rows
            .iter()
            .enumerate()
            .map(|(t, (v, mode))| VelocityFrame {
                timestamp: t as u64,
                velocities: v.to_vec(),
                mode: *mode,
            })
            .collect();
        Trace::new(0.1, frames).unwrap()
    }

    #[test]
    fn reference_policy_appends_series() {
        let trace = trace_from(&[
            (&[10.0, 11.0, 10.5, 10.2], Mode::Traction),
            (&[12.0, 13.0, 12.5, 12.2], Mode::Traction),
        ]);
        let out = virtual_wheelset(&trace, &VirtualPolicy::Reference(vec![10.4, 12.4])).unwrap();
        assert_eq!(out.channels(), 5);
        assert_eq!(out.frames[0].velocities[4], 10.4);
        assert_eq!(out.frames[1].velocities[4], 12.4);

        let short = VirtualPolicy::Reference(vec![10.4]);
        assert!(virtual_wheelset(&trace, &short).is_err());
    }

    #[test]
    fn consensus_copy_leaves_real_indices_unchanged() {
        // The median never lies below the channel minimum, so appending it
        // cannot move the minimum and the real channels' indices stay put.
        let trace = trace_from(&[
            (&[10.0, 11.0, 10.5, 10.2], Mode::Traction),
            (&[12.0, 13.0, 11.5, 12.2], Mode::Traction),
        ]);
        let out =
            virtual_wheelset(&trace, &VirtualPolicy::Inertial { max_accel_kmh_s: 1e9 }).unwrap();
        for (clean, augmented) in trace.frames.iter().zip(&out.frames) {
            for ch in 0..4 {
                assert_eq!(
                    vmd(&clean.velocities, ch).unwrap(),
                    vmd(&augmented.velocities, ch).unwrap()
                );
            }
        }
    }

    #[test]
    fn inertial_estimate_tracks_constant_acceleration_exactly() {
        // Noise-free ramp: consensus equals the true speed each frame and
        // the per-sample change stays within the acceleration bound.
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|t| vec![1.0 + 0.1 * t as f64; 4])
            .collect();
        let frames = rows
            .iter()
            .enumerate()
            .map(|(t, v)| VelocityFrame {
                timestamp: t as u64,
                velocities: v.clone(),
                mode: Mode::Traction,
            })
            .collect();
        let trace = Trace::new(0.1, frames).unwrap();
        // 0.1 km/h per 0.1 s sample = 1 (km/h)/s; bound of 1.5 suffices.
        let out =
            virtual_wheelset(&trace, &VirtualPolicy::Inertial { max_accel_kmh_s: 1.5 }).unwrap();
        for (t, frame) in out.frames.iter().enumerate() {
            assert_eq!(frame.velocities[4], 1.0 + 0.1 * t as f64, "t={t}");
        }
    }

    #[test]
    fn inertial_estimate_resists_common_mode_jump() {
        let mut rows: Vec<(Vec<f64>, Mode)> = (0..10)
            .map(|_| (vec![50.0; 4], Mode::Traction))
            .collect();
        for row in rows.iter_mut().skip(5) {
            row.0 = vec![53.0; 4];
        }
        let frames = rows
            .iter()
            .enumerate()
            .map(|(t, (v, mode))| VelocityFrame {
                timestamp: t as u64,
                velocities: v.clone(),
                mode: *mode,
            })
            .collect();
        let trace = Trace::new(0.1, frames).unwrap();
        let out =
            virtual_wheelset(&trace, &VirtualPolicy::Inertial { max_accel_kmh_s: 2.0 }).unwrap();
        // After the jump the reference moves at most 0.2 km/h per sample,
        // so the faulted channels stand 2.8 km/h above it immediately.
        assert_eq!(out.frames[5].velocities[4], 50.2);
        let index = vmd(&out.frames[5].velocities, 0).unwrap();
        assert!((index - 2.8).abs() < 1e-12);
    }

    #[test]
    fn stopped_frames_pin_the_estimate_to_zero() {
        let trace = trace_from(&[
            (&[0.0, 0.0, 0.0, 0.0], Mode::Stopped),
            (&[0.3, 0.3, 0.3, 0.3], Mode::Traction),
        ]);
        let out =
            virtual_wheelset(&trace, &VirtualPolicy::Inertial { max_accel_kmh_s: 2.0 }).unwrap();
        assert_eq!(out.frames[0].velocities[4], 0.0);
        // One sample later the estimate may move at most 0.2 km/h.
        assert_eq!(out.frames[1].velocities[4], 0.2);
    }

    #[test]
    fn invalid_acceleration_bound_is_rejected() {
        let trace = trace_from(&[(&[1.0, 1.0], Mode::Traction)]);
        assert!(
            virtual_wheelset(&trace, &VirtualPolicy::Inertial { max_accel_kmh_s: 0.0 }).is_err()
        );
    }
}
