//! Detection and isolation of intermittent per-channel anomalies in
//! multichannel, normally-consistent velocity signals.
//!
//! The monitored quantity is the variable-to-minimum difference of each
//! channel, smoothed by a weighted moving average whose weights minimize the
//! index variance given the estimated autocovariances of the training data.
//! Alarm thresholds are the maxima of the smoothed index over an
//! anomaly-free training trace, so the detector never alarms on its own
//! training data. A seeded trace simulator with additive fault injection
//! provides end-to-end validation without hardware.
//!
//! Module map:
//! - [`vmd`] — the difference operator and its checkable algebra
//! - [`stats`] — autocovariance estimation and the moving-average variance
//! - [`owv`] — the optimal weight vector, its oracle and diagnostics
//! - [`model`] — offline training of per-channel, per-mode detector models
//! - [`detect`] — streaming detection, alarm events, baseline criteria
//! - [`analysis`] — isolability thresholds, window selection, fault
//!   condition checks
//! - [`augment`] — virtual reference channel policies
//! - [`sim`] — synthetic trace generation and fault injection
//! - [`io`] — CSV/JSON persistence of traces, labels, models and alarms
//! - [`fuzz`] — randomized property suites with reproducible reports

pub mod analysis;
pub mod augment;
pub mod detect;
pub mod error;
pub mod frame;
pub mod fuzz;
pub mod io;
pub mod model;
pub mod owv;
pub mod sim;
pub mod stats;
pub mod vmd;

pub use error::{Error, Result};
