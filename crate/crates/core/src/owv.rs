//! Optimal weight vector for the weighted moving average.
//!
//! The weights minimize the moving-average variance `sum_l sum_j a_l a_j
//! R_{l-j}` subject to the unit-sum constraint. The stationarity conditions
//! `sum_j a_j (R_{l-j} - R_{l+1-j}) = 0` for consecutive rows, stacked with
//! the constraint row of ones, form a square linear system whose solution is
//! unique whenever the variance is positive. [`solve_owv`] solves that system
//! by a dense pivoted factorization; [`qp_oracle`] solves the same
//! minimization by variable elimination on the reduced problem with its own
//! elimination code, and exists purely to cross-check the closed form.
//!
//! Properties of the optimum: it is symmetric (`a_m = a_{W-m+1}`), equal
//! weights `1/W` are optimal for uncorrelated data, and the sign of `a_m`
//! equals the sign of the determinant of the covariance matrix with column
//! `m` replaced by ones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{wma_variance, AutocovSequence};

/// Condition-number estimate beyond which the closed-form solve falls back
/// to equal weights.
const CONDITION_LIMIT: f64 = 1e12;

/// Relative tolerance on the unit-sum invariant of a weight vector.
const SUM_TOLERANCE: f64 = 1e-12;

/// Relative tolerance for the symmetry diagnostic.
const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Normalized window weights. Index 0 weighs the most recent sample of the
/// window, index `W-1` the oldest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    /// Wraps a weight sequence, enforcing the unit-sum invariant.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InputDomain("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InputDomain("non-finite weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InputDomain(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(WeightVector { weights })
    }

    /// The equally weighted scheme `1/W`.
    pub fn equal(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InputDomain("window must be at least 1".into()));
        }
        Ok(WeightVector {
            weights: vec![1.0 / window as f64; window],
        })
    }

    pub fn window(&self) -> usize {
        self.weights.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Largest deviation from the mirror-symmetric structure, relative to the
    /// largest weight magnitude.
    pub fn asymmetry(&self) -> f64 {
        let w = self.weights.len();
        let scale = self
            .weights
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        (0..w)
            .map(|m| (self.weights[m] - self.weights[w - 1 - m]).abs())
            .fold(0.0_f64, f64::max)
            / scale
    }

    pub(crate) fn validate(&self) -> Result<()> {
        Self::new(self.weights.clone()).map(|_| ())
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.weights[index]
    }
}

/// Sign classification with a scale-aware zero band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(value: f64, zero_band: f64) -> Sign {
        if value.abs() <= zero_band {
            Sign::Zero
        } else if value > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Negative => "-",
            Sign::Zero => "0",
            Sign::Positive => "+",
        })
    }
}

/// Why the solver returned equal weights instead of the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwvFallback {
    /// Zero-variance series: every weight vector gives the same (zero)
    /// index variance, so the optimum is not unique.
    DegenerateData,
    /// The stationarity system was numerically singular.
    IllConditioned,
}

/// Structural diagnostics attached to a solved weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OwvDiagnostics {
    /// The optimum is mathematically unique (positive series variance).
    pub unique: bool,
    /// The solved weights satisfy the mirror symmetry within tolerance.
    pub symmetric: bool,
    /// Determinant-based per-index sign report; falls back to the signs of
    /// the returned weights when the determinant test is unavailable.
    pub positivity: Vec<Sign>,
    /// Index variance at the solved weights.
    pub variance: f64,
    /// Largest stationarity-equation residual, in the units of the
    /// autocovariances.
    pub kkt_residual: f64,
    pub fallback: Option<OwvFallback>,
}

impl OwvDiagnostics {
    /// Every weight strictly positive per the determinant test.
    pub fn all_positive(&self) -> bool {
        self.positivity.iter().all(|s| *s == Sign::Positive)
    }
}

/// Normalized lag accessor: autocovariances divided by the variance, making
/// the solve scale-invariant.
struct NormalizedLags<'a> {
    acov: &'a AutocovSequence,
    inv_r0: f64,
}

impl<'a> NormalizedLags<'a> {
    fn new(acov: &'a AutocovSequence) -> Self {
        NormalizedLags {
            acov,
            inv_r0: 1.0 / acov.variance(),
        }
    }

    fn lag(&self, l: isize) -> f64 {
        self.acov.lag(l) * self.inv_r0
    }
}

fn check_window(acov: &AutocovSequence, window: usize) -> Result<()> {
    if window == 0 {
        return Err(Error::InputDomain("window must be at least 1".into()));
    }
    if window > acov.max_lag() + 1 {
        return Err(Error::InsufficientLags {
            requested: window,
            available: acov.max_lag() + 1,
        });
    }
    Ok(())
}

/// Stationarity-plus-constraint system matrix in normalized units: rows
/// `l < W-1` carry `r_{l-j} - r_{l+1-j}` (0-based `l`, `j`), the last row is
/// all ones.
pub(crate) fn build_kkt_matrix(lags: &[f64], window: usize) -> DMatrix<f64> {
    let r = |l: isize| lags[l.unsigned_abs()];
    DMatrix::from_fn(window, window, |l, j| {
        if l + 1 < window {
            let l = l as isize;
            let j = j as isize;
            r(l - j) - r(l + 1 - j)
        } else {
            1.0
        }
    })
}

fn infinity_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

/// Largest stationarity-equation residual of `weights` against `acov`, in
/// the units of the autocovariances:
/// `max_l |sum_j a_j (R_{l-j} - R_{l+1-j})|` over consecutive row pairs.
pub fn kkt_residual(acov: &AutocovSequence, weights: &WeightVector) -> Result<f64> {
    let w = weights.window();
    check_window(acov, w)?;
    let mut worst = 0.0_f64;
    for l in 0..w.saturating_sub(1) {
        let mut acc = 0.0;
        for j in 0..w {
            let l = l as isize;
            let j = j as isize;
            acc += weights[j as usize] * (acov.lag(l - j) - acov.lag(l + 1 - j));
        }
        worst = worst.max(acc.abs());
    }
    Ok(worst)
}

fn fallback_result(
    acov: &AutocovSequence,
    window: usize,
    reason: OwvFallback,
) -> Result<(WeightVector, OwvDiagnostics)> {
    let weights = WeightVector::equal(window)?;
    let variance = wma_variance(acov, weights.as_slice())?;
    let kkt = kkt_residual(acov, &weights)?;
    let diagnostics = OwvDiagnostics {
        unique: acov.variance() > 0.0 && reason != OwvFallback::DegenerateData,
        symmetric: true,
        positivity: vec![Sign::Positive; window],
        variance,
        kkt_residual: kkt,
        fallback: Some(reason),
    };
    Ok((weights, diagnostics))
}

/// Solves for the variance-minimizing unit-sum weight vector.
///
/// A zero-variance series yields equal weights flagged
/// [`OwvFallback::DegenerateData`]; a numerically singular system (condition
/// estimate beyond 1e12) yields equal weights flagged
/// [`OwvFallback::IllConditioned`]. Either way the caller always receives a
/// usable weight vector.
pub fn solve_owv(
    acov: &AutocovSequence,
    window: usize,
) -> Result<(WeightVector, OwvDiagnostics)> {
    check_window(acov, window)?;

    if acov.variance() <= 0.0 {
        return fallback_result(acov, window, OwvFallback::DegenerateData);
    }
    if window == 1 {
        let weights = WeightVector::new(vec![1.0])?;
        let variance = acov.variance();
        return Ok((
            weights,
            OwvDiagnostics {
                unique: true,
                symmetric: true,
                positivity: vec![Sign::Positive],
                variance,
                kkt_residual: 0.0,
                fallback: None,
            },
        ));
    }

    let lags: Vec<f64> = {
        let norm = NormalizedLags::new(acov);
        (0..window).map(|l| norm.lag(l as isize)).collect()
    };
    let a = build_kkt_matrix(&lags, window);
    let lu = a.clone().lu();
    let inverse = match lu.try_inverse() {
        Some(inv) => inv,
        None => return fallback_result(acov, window, OwvFallback::IllConditioned),
    };
    let condition = infinity_norm(&a) * infinity_norm(&inverse);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return fallback_result(acov, window, OwvFallback::IllConditioned);
    }

    let mut b = DVector::zeros(window);
    b[window - 1] = 1.0;
    let mut solution = match lu.solve(&b) {
        Some(s) => s,
        None => return fallback_result(acov, window, OwvFallback::IllConditioned),
    };
    // One step of iterative refinement tightens the stationarity residual.
    let residual = &b - &a * &solution;
    if let Some(correction) = lu.solve(&residual) {
        solution += correction;
    }

    let weights = WeightVector::new(solution.iter().copied().collect())?;
    let positivity = positivity_report(acov, window)?;
    let variance = wma_variance(acov, weights.as_slice())?;
    let kkt = kkt_residual(acov, &weights)?;
    let diagnostics = OwvDiagnostics {
        unique: true,
        symmetric: weights.asymmetry() <= SYMMETRY_TOLERANCE,
        positivity,
        variance,
        kkt_residual: kkt,
        fallback: None,
    };
    Ok((weights, diagnostics))
}

/// Reference minimizer used to cross-check [`solve_owv`]: eliminates the last
/// weight through the unit-sum constraint and solves the reduced unconstrained
/// convex quadratic with its own Gaussian elimination. Slower path, test and
/// fuzz use only.
pub fn qp_oracle(acov: &AutocovSequence, window: usize) -> Result<WeightVector> {
    check_window(acov, window)?;
    if window == 1 {
        return WeightVector::new(vec![1.0]);
    }
    if acov.variance() <= 0.0 {
        return WeightVector::equal(window);
    }

    let norm = NormalizedLags::new(acov);
    let gamma = |l: usize, j: usize| norm.lag(l as isize - j as isize);

    // With a = [y; 1 - sum(y)], the variance is y^T H y + 2 g^T y + const:
    //   H[l][j] = G[l][j] - G[l][W-1] - G[W-1][j] + G[W-1][W-1]
    //   g[l]    = G[l][W-1] - G[W-1][W-1]
    let n = window - 1;
    let mut h = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for (l, row) in h.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = gamma(l, j) - gamma(l, window - 1) - gamma(window - 1, j)
                + gamma(window - 1, window - 1);
        }
        rhs[l] = -(gamma(l, window - 1) - gamma(window - 1, window - 1));
    }

    let y = match gaussian_solve(h, rhs) {
        Some(y) => y,
        None => return WeightVector::equal(window),
    };
    let mut weights = y;
    let last = 1.0 - weights.iter().sum::<f64>();
    weights.push(last);
    WeightVector::new(weights)
}

/// Plain Gaussian elimination with partial pivoting; independent of the
/// factorization behind [`solve_owv`].
#[allow(clippy::needless_range_loop)]
fn gaussian_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot_row][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Determinant-based sign report: for each index `m`, the sign of the
/// determinant of the covariance matrix with column `m` replaced by ones
/// equals the sign of the optimal weight `a_m`. Determinants are computed on
/// the variance-normalized matrix; zero is declared below `1e-12 * W!`, the
/// scale-free form of the zero test.
pub fn positivity_report(acov: &AutocovSequence, window: usize) -> Result<Vec<Sign>> {
    check_window(acov, window)?;
    if acov.variance() <= 0.0 {
        return Err(Error::InputDomain(
            "positivity report requires a positive series variance".into(),
        ));
    }
    let norm = NormalizedLags::new(acov);
    let factorial: f64 = (1..=window).map(|k| k as f64).product();
    let zero_band = 1e-12 * factorial;

    let mut report = Vec::with_capacity(window);
    for m in 0..window {
        let checked = DMatrix::from_fn(window, window, |l, j| {
            if j == m {
                1.0
            } else {
                norm.lag(l as isize - j as isize)
            }
        });
        let det = checked.lu().determinant();
        report.push(Sign::of(det, zero_band));
    }
    Ok(report)
}
