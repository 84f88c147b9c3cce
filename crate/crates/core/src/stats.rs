//! Mean and autocovariance estimation for a stationary difference-index
//! series, the Toeplitz covariance matrix built from it, and the weighted
//! moving-average variance form.
//!
//! The lag-`l` autocovariance uses the biased `1/N` normalization, not
//! `1/(N-l)`: the biased estimator is what makes the Toeplitz matrix
//! `(1/N) * Y * Y^T` and therefore positive semidefinite for every input
//! series. Do not "fix" it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance floor for positive-semidefiniteness verification.
fn psd_tolerance(r0: f64) -> f64 {
    1e-10 * r0.max(1.0)
}

/// Estimated mean and lagged autocovariances of a scalar series.
///
/// Only nonnegative lags are stored; the sequence is symmetric in the lag by
/// construction. `lags[0]` is the variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovSequence {
    mean: f64,
    lags: Vec<f64>,
    sample_count: usize,
}

impl AutocovSequence {
    /// Wraps externally supplied values, checking the estimator invariants:
    /// `R_0 >= 0`, `|R_l| <= R_0` (up to round-off), `L <= N - 1`, all finite.
    pub fn new(mean: f64, lags: Vec<f64>, sample_count: usize) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::InputDomain("need at least lag 0".into()));
        }
        if !mean.is_finite() || lags.iter().any(|r| !r.is_finite()) {
            return Err(Error::InputDomain("non-finite autocovariance value".into()));
        }
        let r0 = lags[0];
        if r0 < 0.0 {
            return Err(Error::InputDomain(format!("negative variance {r0}")));
        }
        let slack = 1.0 + 1e-12;
        if let Some((l, &r)) = lags.iter().enumerate().find(|(_, &r)| r.abs() > r0 * slack) {
            return Err(Error::InputDomain(format!(
                "|R_{l}| = {} exceeds R_0 = {r0}",
                r.abs()
            )));
        }
        if sample_count < 2 {
            return Err(Error::InsufficientData(format!(
                "autocovariance needs at least 2 samples, got {sample_count}"
            )));
        }
        if lags.len() > sample_count {
            return Err(Error::InputDomain(format!(
                "max lag {} exceeds N - 1 = {}",
                lags.len() - 1,
                sample_count - 1
            )));
        }
        Ok(AutocovSequence {
            mean,
            lags,
            sample_count,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Autocovariance at `lag.abs()`; lags beyond the retained range are an
    /// error at the call sites that need them, so this panics if indexed past
    /// `max_lag`.
    pub fn lag(&self, lag: isize) -> f64 {
        self.lags[lag.unsigned_abs()]
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    /// Largest retained lag `L`.
    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn variance(&self) -> f64 {
        self.lags[0]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        Self::new(self.mean, self.lags.clone(), self.sample_count).map(|_| ())
    }
}

/// Estimates mean and autocovariances of a contiguous series up to `max_lag`:
/// `mean = (1/N) sum x_j`,
/// `R_l = (1/N) sum_{j=1}^{N-l} (x_j - mean)(x_{j+l} - mean)`.
pub fn estimate_autocov(series: &[f64], max_lag: usize) -> Result<AutocovSequence> {
    estimate_autocov_segmented(&[series], max_lag)
}

/// Same estimator over a series split into contiguous segments: lag products
/// never straddle a segment boundary, while the mean and the `1/N`
/// normalization run over all samples. Equivalent to estimating the
/// zero-padded concatenation, so positive semidefiniteness of the Toeplitz
/// matrix is preserved.
pub fn estimate_autocov_segmented(segments: &[&[f64]], max_lag: usize) -> Result<AutocovSequence> {
    let n: usize = segments.iter().map(|s| s.len()).sum();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "autocovariance needs at least 2 samples, got {n}"
        )));
    }
    if max_lag > n - 1 {
        return Err(Error::InputDomain(format!(
            "max lag {max_lag} exceeds N - 1 = {}",
            n - 1
        )));
    }
    for segment in segments {
        if let Some(bad) = segment.iter().find(|v| !v.is_finite()) {
            return Err(Error::InputDomain(format!("non-finite entry {bad}")));
        }
    }

    let sum: f64 = segments.iter().flat_map(|s| s.iter()).sum();
    let mean = sum / n as f64;

    let mut lags = vec![0.0; max_lag + 1];
    for segment in segments {
        for (l, acc) in lags.iter_mut().enumerate() {
            if segment.len() > l {
                for j in 0..segment.len() - l {
                    *acc += (segment[j] - mean) * (segment[j + l] - mean);
                }
            }
        }
    }
    for acc in &mut lags {
        *acc /= n as f64;
    }
    // Round-off can leave a tiny negative variance on a constant series.
    if lags[0] < 0.0 && lags[0] > -1e-12 * mean.abs().max(1.0) {
        lags[0] = 0.0;
    }
    AutocovSequence::new(mean, lags, n)
}

/// Symmetric Toeplitz covariance matrix of a given order, verified positive
/// semidefinite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzGamma {
    matrix: DMatrix<f64>,
}

impl ToeplitzGamma {
    pub fn order(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Entry `(l, j)`, equal to the autocovariance at lag `|l - j|`.
    pub fn entry(&self, l: usize, j: usize) -> f64 {
        self.matrix[(l, j)]
    }
}

/// Builds the order-`k` Toeplitz matrix with entry `(l, j) = R_{|l-j|}` and
/// verifies its minimum eigenvalue is above `-1e-10 * max(R_0, 1)`.
pub fn build_gamma(acov: &AutocovSequence, order: usize) -> Result<ToeplitzGamma> {
    if order == 0 {
        return Err(Error::InputDomain("order must be at least 1".into()));
    }
    if order > acov.max_lag() + 1 {
        return Err(Error::InsufficientLags {
            requested: order,
            available: acov.max_lag() + 1,
        });
    }
    let matrix = DMatrix::from_fn(order, order, |l, j| {
        acov.lag(l as isize - j as isize)
    });
    let min_eig = matrix
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -psd_tolerance(acov.variance()) {
        return Err(Error::InputDomain(format!(
            "autocovariance sequence is not positive semidefinite \
             (min eigenvalue {min_eig} at order {order})"
        )));
    }
    Ok(ToeplitzGamma { matrix })
}

/// Variance of the weighted moving average under the estimated
/// autocovariances: the double sum `sum_l sum_j a_l a_j R_{|l-j|}`,
/// algebraically `a^T Gamma a`.
pub fn wma_variance(acov: &AutocovSequence, weights: &[f64]) -> Result<f64> {
    let w = weights.len();
    if w == 0 {
        return Err(Error::InputDomain("empty weight vector".into()));
    }
    if w > acov.max_lag() + 1 {
        return Err(Error::InsufficientLags {
            requested: w,
            available: acov.max_lag() + 1,
        });
    }
    let mut total = 0.0;
    for (l, &al) in weights.iter().enumerate() {
        for (j, &aj) in weights.iter().enumerate() {
            total += al * aj * acov.lag(l as isize - j as isize);
        }
    }
    Ok(total)
}
