//! The variable-to-minimum difference (VMD) operator and its algebra.
//!
//! For a sample vector `v` the index of channel `i` is `v[i] - min(v)`. It is
//! zero exactly when the channel attains the minimum, nonnegative always, and
//! invariant under adding a common offset to every channel. The braking-mode
//! form `max(v) - v[i]` equals the plain form applied to the elementwise
//! negation.
//!
//! Besides the operator itself this module exposes checkable reports for the
//! min/VMD operator properties (scaling, superadditivity, triangle and
//! reverse-triangle inequalities, and the scalar equality conditions). These
//! back the randomized suites in [`crate::fuzz`] and the test surface; they
//! are not needed on the detection path.

use crate::error::{Error, Result};

fn check_input(values: &[f64], channel: usize) -> Result<()> {
    if channel >= values.len() {
        return Err(Error::ChannelIndex {
            index: channel,
            channels: values.len(),
        });
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InputDomain(format!("non-finite entry {bad}")));
    }
    Ok(())
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Variable-to-minimum difference of `channel` (0-based): `v[i] - min(v)`.
///
/// The result is nonnegative, and zero iff the channel attains the minimum.
pub fn vmd(values: &[f64], channel: usize) -> Result<f64> {
    check_input(values, channel)?;
    Ok(values[channel] - min_of(values))
}

/// Braking-mode form `max(v) - v[i]`, bit-identical to `vmd(-v, i)` under the
/// same fold order (IEEE negation is exact and order-preserving).
pub fn vmd_negated(values: &[f64], channel: usize) -> Result<f64> {
    check_input(values, channel)?;
    Ok(max_of(values) - values[channel])
}

/// Absolute-plus-relative comparison tolerance for the operator-property
/// checks: `4 * eps * max(1, max |entry|)` over every value involved.
pub fn property_tolerance(magnitude: f64) -> f64 {
    4.0 * f64::EPSILON * magnitude.abs().max(1.0)
}

fn max_abs(slices: &[&[f64]]) -> f64 {
    slices
        .iter()
        .flat_map(|s| s.iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

// ---------------------------------------------------------------------------
// Scalar min equality conditions
// ---------------------------------------------------------------------------

/// Outcome of checking the scalar inequalities
/// `min(a,b) + min(c,d) <= min(a+c, b+d)` and
/// `min(a-c, b-d) <= min(a,b) - min(c,d)`
/// together with their exact equality conditions.
///
/// The equality conditions for the first: `a = b`, or `c = d`, or
/// `a < b && c < d`, or `b < a && d < c`. For the second: `c = d`, or
/// `a <= b && c < d && a - c <= b - d`, or `b <= a && d < c && b - d <= a - c`.
///
/// Comparisons are exact float comparisons; with inputs whose sums and
/// differences are exactly representable (e.g. dyadic rationals of moderate
/// size) the equality cases are float-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarMinReport {
    /// `min(a,b) + min(c,d) <= min(a+c, b+d)` held.
    pub sum_inequality: bool,
    /// Equality in the sum inequality occurred iff its conditions held.
    pub sum_equality_iff_conditions: bool,
    /// `min(a-c, b-d) <= min(a,b) - min(c,d)` held.
    pub difference_inequality: bool,
    /// Equality in the difference inequality occurred iff its conditions held.
    pub difference_equality_iff_conditions: bool,
}

impl ScalarMinReport {
    pub fn all_hold(&self) -> bool {
        self.sum_inequality
            && self.sum_equality_iff_conditions
            && self.difference_inequality
            && self.difference_equality_iff_conditions
    }
}

/// Evaluates the scalar min inequalities and their equality conditions for a
/// 4-tuple.
pub fn check_scalar_min(a: f64, b: f64, c: f64, d: f64) -> Result<ScalarMinReport> {
    for v in [a, b, c, d] {
        if !v.is_finite() {
            return Err(Error::InputDomain(format!("non-finite entry {v}")));
        }
    }

    let sum_lhs = a.min(b) + c.min(d);
    let sum_rhs = (a + c).min(b + d);
    let sum_conditions = a == b || c == d || (a < b && c < d) || (b < a && d < c);

    let diff_lhs = (a - c).min(b - d);
    let diff_rhs = a.min(b) - c.min(d);
    let diff_conditions = c == d
        || (a <= b && c < d && a - c <= b - d)
        || (b <= a && d < c && b - d <= a - c);

    Ok(ScalarMinReport {
        sum_inequality: sum_lhs <= sum_rhs,
        sum_equality_iff_conditions: (sum_lhs == sum_rhs) == sum_conditions,
        difference_inequality: diff_lhs <= diff_rhs,
        difference_equality_iff_conditions: (diff_lhs == diff_rhs) == diff_conditions,
    })
}

// ---------------------------------------------------------------------------
// Vector min properties
// ---------------------------------------------------------------------------

/// Per-property outcome for the vector min operator:
/// scaling/negation identity, superadditivity, and the difference bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinOperatorReport {
    /// `min(z*x) = z*min(x)` for `z >= 0`, `z*max(x)` for `z < 0`.
    pub scaling: bool,
    /// `min(x) + min(y) <= min(x + y)`.
    pub superadditivity: bool,
    /// `min(x) - min(y) >= min(x - y)`.
    pub difference: bool,
}

impl MinOperatorReport {
    pub fn all_hold(&self) -> bool {
        self.scaling && self.superadditivity && self.difference
    }
}

/// Evaluates the three vector min properties on `(x, y, z)`. The inequalities
/// are checked within the shared tolerance; with two-term sums and monotone
/// rounding they hold exactly in practice.
pub fn check_min_inequalities(x: &[f64], y: &[f64], z: f64) -> Result<MinOperatorReport> {
    if x.len() != y.len() {
        return Err(Error::InputDomain(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::InputDomain("empty input".into()));
    }
    if !z.is_finite() {
        return Err(Error::InputDomain(format!("non-finite scalar {z}")));
    }
    check_input(x, 0)?;
    check_input(y, 0)?;

    let scaled: Vec<f64> = x.iter().map(|&v| z * v).collect();
    let scaling_expected = if z >= 0.0 { z * min_of(x) } else { z * max_of(x) };
    let tol_scale = property_tolerance(max_abs(&[x, &scaled]));
    let scaling = (min_of(&scaled) - scaling_expected).abs() <= tol_scale;

    let sum: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| a + b).collect();
    let tol_sum = property_tolerance(max_abs(&[x, y, &sum]));
    let superadditivity = min_of(x) + min_of(y) <= min_of(&sum) + tol_sum;

    let diff: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
    let tol_diff = property_tolerance(max_abs(&[x, y, &diff]));
    let difference = min_of(x) - min_of(y) >= min_of(&diff) - tol_diff;

    Ok(MinOperatorReport {
        scaling,
        superadditivity,
        difference,
    })
}

// ---------------------------------------------------------------------------
// VMD operator properties
// ---------------------------------------------------------------------------

/// Per-property outcome for the VMD operator on `(x, y, z, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VmdOperatorReport {
    /// `VMD_i(x) = 0` iff `x[i] = min(x)` (exact; nearby-value subtraction is
    /// exact by the Sterbenz lemma).
    pub zero_iff_min: bool,
    /// `VMD_i(x + z*1) = VMD_i(x)`.
    pub translation_invariance: bool,
    /// `VMD_i(z*x) = z*VMD_i(x)` for `z >= 0`, `-z*VMD_i(-x)` for `z < 0`.
    pub scaling: bool,
    /// `VMD_i(x + y) <= VMD_i(x) + VMD_i(y)`.
    pub triangle: bool,
    /// `VMD_i(x - y) >= VMD_i(x) - VMD_i(y)`.
    pub reverse_triangle: bool,
}

impl VmdOperatorReport {
    pub fn all_hold(&self) -> bool {
        self.zero_iff_min
            && self.translation_invariance
            && self.scaling
            && self.triangle
            && self.reverse_triangle
    }
}

/// Evaluates the five VMD operator properties on `(x, y, z, i)` within the
/// shared tolerance.
pub fn check_vmd_properties(
    x: &[f64],
    y: &[f64],
    z: f64,
    channel: usize,
) -> Result<VmdOperatorReport> {
    if x.len() != y.len() {
        return Err(Error::InputDomain(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if !z.is_finite() {
        return Err(Error::InputDomain(format!("non-finite scalar {z}")));
    }
    check_input(x, channel)?;
    check_input(y, channel)?;

    let vx = vmd(x, channel)?;
    let zero_iff_min = (vx == 0.0) == (x[channel] == min_of(x));

    let shifted: Vec<f64> = x.iter().map(|&v| v + z).collect();
    let tol_shift = property_tolerance(max_abs(&[x, &shifted]));
    let translation_invariance = (vmd(&shifted, channel)? - vx).abs() <= tol_shift;

    let scaled: Vec<f64> = x.iter().map(|&v| z * v).collect();
    let scaling_expected = if z >= 0.0 {
        z * vx
    } else {
        let negated: Vec<f64> = x.iter().map(|&v| -v).collect();
        -z * vmd(&negated, channel)?
    };
    let tol_scale = property_tolerance(max_abs(&[x, &scaled]));
    let scaling = (vmd(&scaled, channel)? - scaling_expected).abs() <= tol_scale;

    let vy = vmd(y, channel)?;
    let sum: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| a + b).collect();
    let tol_sum = property_tolerance(max_abs(&[x, y, &sum]));
    let triangle = vmd(&sum, channel)? <= vx + vy + tol_sum;

    let diff: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
    let tol_diff = property_tolerance(max_abs(&[x, y, &diff]));
    let reverse_triangle = vmd(&diff, channel)? >= vx - vy - tol_diff;

    Ok(VmdOperatorReport {
        zero_iff_min,
        translation_invariance,
        scaling,
        triangle,
        reverse_triangle,
    })
}
