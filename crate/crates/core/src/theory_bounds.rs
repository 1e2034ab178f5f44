//! Finite-sample bound constants for MCR: outer and inner Rashomon-set
//! inflations, the uniform MR deviation `q(delta, r, n)`, descriptor CI
//! inflations, loss caps for linear and kernel classes, and the segment
//! covering number.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::RelianceMode;
use crate::linear_class::EllipsoidConstraint;
use crate::rkhs_class::{cross_validated_loss, KernelSpec, RkhsClass};

/// Loss-bound inputs shared by all bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Cap on any individual loss.
    pub b_ind: f64,
    /// Cap on the loss difference to the reference model.
    pub b_ref: f64,
    /// Floor on the in-sample original loss (ratio mode only).
    pub b_orig: f64,
    /// Cap on the in-sample switched loss (ratio mode only).
    pub b_switch: f64,
    pub n: usize,
    pub delta: f64,
}

impl TheoryConstants {
    /// Conservative defaults `b_ref = b_switch = b_ind`.
    pub fn from_individual_bound(b_ind: f64, b_orig: f64, n: usize, delta: f64) -> Self {
        Self { b_ind, b_ref: b_ind, b_orig, b_switch: b_ind, n, delta }
    }

    /// Checks the constants needed by `mode`.
    pub fn validate(&self, mode: RelianceMode) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConstants(m.to_string()));
        if !(self.b_ind >= 0.0 && self.b_ind.is_finite()) {
            return bad("b_ind must be finite and >= 0");
        }
        if !(self.b_ref >= 0.0 && self.b_ref.is_finite()) {
            return bad("b_ref must be finite and >= 0");
        }
        if self.n == 0 {
            return bad("n must be positive");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta must lie in (0, 1]");
        }
        if mode == RelianceMode::Ratio {
            if !(self.b_orig > 0.0 && self.b_orig.is_finite()) {
                return bad("b_orig must be finite and > 0");
            }
            if !(self.b_switch.is_finite() && self.b_orig <= self.b_switch) {
                return bad("ratio bounds need b_orig <= b_switch");
            }
        }
        Ok(())
    }

    fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }
}

/// Which guarantee a [`BoundReport`] instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Outer bounds on population MCR from an inflated empirical Rashomon set.
    Outer,
    /// Inner bounds from a deflated empirical Rashomon set.
    Inner,
    /// Interval for the reliance of the best-in-class model.
    BestInClass,
    /// Rashomon-set interval for a descriptor.
    PhiCi,
}

/// Adjusted Rashomon tolerance plus additive reliance error term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon_in: f64,
    pub epsilon_adjusted: f64,
    pub q: f64,
    pub mode: RelianceMode,
    pub kind: BoundKind,
}

/// Covering numbers of the class at radii `r` and `r sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringNumbers {
    pub at_r: f64,
    pub at_r_sqrt2: f64,
}

impl CoveringNumbers {
    /// Uses one count for both radii; conservative since covering numbers
    /// shrink as the radius grows.
    pub fn uniform(count: u64) -> Self {
        Self { at_r: count as f64, at_r_sqrt2: count as f64 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.at_r >= 1.0 && self.at_r_sqrt2 >= 1.0) || !self.at_r.is_finite() || !self.at_r_sqrt2.is_finite() {
            return Err(Error::InvalidConstants("covering numbers must be finite and >= 1".into()));
        }
        Ok(())
    }
}

/// Deviation of a ratio `Z/X` given deviations `k_switch` of `Z` and
/// `k_orig` of `X`, with `b_orig <= X` and `Z <= b_switch`.
pub fn q_ratio(tc: &TheoryConstants, k_switch: f64, k_orig: f64) -> f64 {
    tc.b_switch / tc.b_orig - (tc.b_switch - k_switch) / (tc.b_orig + k_orig)
}

/// Deviation of a difference `Z - X`.
pub fn q_difference(k_switch: f64, k_orig: f64) -> f64 {
    k_switch + k_orig
}

fn q_mode(tc: &TheoryConstants, k_switch: f64, k_orig: f64, mode: RelianceMode) -> f64 {
    match mode {
        RelianceMode::Ratio => q_ratio(tc, k_switch, k_orig),
        RelianceMode::Difference => q_difference(k_switch, k_orig),
    }
}

fn sqrt_log_over(numerator: f64, denom: f64) -> f64 {
    (numerator.ln() / denom).sqrt()
}

/// Reliance error for a single fixed model at confidence `1 - delta/3`-style
/// splitting: `k_switch = B_ind sqrt(log(6/delta)/n)`,
/// `k_orig = B_ind sqrt(log(6/delta)/(2n))`.
fn single_model_q(tc: &TheoryConstants, mode: RelianceMode) -> f64 {
    let n = tc.n as f64;
    let k_switch = tc.b_ind * sqrt_log_over(6.0 / tc.delta, n);
    let k_orig = tc.b_ind * sqrt_log_over(6.0 / tc.delta, 2.0 * n);
    q_mode(tc, k_switch, k_orig, mode)
}

/// `epsilon + 2 B_ref sqrt(log(3/delta)/(2n))` and the single-model reliance
/// error: population MCR+ (MCR-) is at most (least) the empirical MCR+ (MCR-)
/// at the adjusted tolerance plus (minus) `q`, each with probability
/// `>= 1 - delta`.
pub fn outer_bounds(tc: &TheoryConstants, epsilon: f64, mode: RelianceMode) -> Result<BoundReport> {
    tc.validate(mode)?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidConstants(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let n = tc.n as f64;
    Ok(BoundReport {
        epsilon_in: epsilon,
        epsilon_adjusted: epsilon + 2.0 * tc.b_ref * sqrt_log_over(3.0 / tc.delta, 2.0 * n),
        q: single_model_q(tc, mode),
        mode,
        kind: BoundKind::Outer,
    })
}

/// Interval `[MCR-(eps) - q, MCR+(eps) + q]` for the reliance of any
/// best-in-class model, at the outer-bound constants with `delta/2`
/// and `epsilon = 0`.
pub fn best_in_class_ci(tc: &TheoryConstants, mode: RelianceMode) -> Result<BoundReport> {
    tc.validate(mode)?;
    let half = tc.with_delta(tc.delta / 2.0);
    let mut report = outer_bounds(&half, 0.0, mode)?;
    report.kind = BoundKind::BestInClass;
    Ok(report)
}

/// Uniform deviation bound on `|MR_hat(f) - MR(f)|` over the class, holding
/// with probability `>= 1 - delta`, for a cover at radius `r`.
pub fn q_uniform_with(tc: &TheoryConstants, r: f64, covering: CoveringNumbers, mode: RelianceMode) -> Result<f64> {
    tc.validate(mode)?;
    covering.validate()?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidConstants(format!("r must be finite and >= 0, got {r}")));
    }
    let n = tc.n as f64;
    let s2 = std::f64::consts::SQRT_2;
    let k_switch = tc.b_ind * sqrt_log_over(4.0 * covering.at_r_sqrt2 / tc.delta, n) + 2.0 * r * s2;
    let k_orig = tc.b_ind * sqrt_log_over(4.0 * covering.at_r / tc.delta, 2.0 * n) + 2.0 * r;
    Ok(q_mode(tc, k_switch, k_orig, mode))
}

/// [`q_uniform_with`] using one covering count for both radii.
pub fn q_uniform(tc: &TheoryConstants, r: f64, covering: u64, mode: RelianceMode) -> Result<f64> {
    q_uniform_with(tc, r, CoveringNumbers::uniform(covering), mode)
}

/// Deflated tolerance `epsilon - 2 B_ref sqrt(log(4 N / delta)/(2n)) - 2r`
/// and error `q(delta/2, r, n)`: population MCR+ (MCR-) is at least (most)
/// the empirical value at the deflated tolerance minus (plus) `q`. The
/// deflated tolerance may be negative; the empirical Rashomon set then
/// consists of the reference model alone.
pub fn inner_bounds_with(
    tc: &TheoryConstants,
    epsilon: f64,
    r: f64,
    covering: CoveringNumbers,
    mode: RelianceMode,
) -> Result<BoundReport> {
    tc.validate(mode)?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidConstants(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let q = q_uniform_with(&tc.with_delta(tc.delta / 2.0), r, covering, mode)?;
    let n = tc.n as f64;
    Ok(BoundReport {
        epsilon_in: epsilon,
        epsilon_adjusted: epsilon - 2.0 * tc.b_ref * sqrt_log_over(4.0 * covering.at_r / tc.delta, 2.0 * n) - 2.0 * r,
        q,
        mode,
        kind: BoundKind::Inner,
    })
}

/// [`inner_bounds_with`] using one covering count for both radii.
pub fn inner_bounds(tc: &TheoryConstants, epsilon: f64, r: f64, covering: u64, mode: RelianceMode) -> Result<BoundReport> {
    inner_bounds_with(tc, epsilon, r, CoveringNumbers::uniform(covering), mode)
}

/// Rashomon inflations for descriptor intervals: the point version
/// `2 B_ref sqrt(log(1/delta)/(2n))` and the range version with
/// `log(2/delta)`.
pub fn phi_ci_epsilons(tc: &TheoryConstants) -> (f64, f64) {
    let n = tc.n as f64;
    let point = 2.0 * tc.b_ref * sqrt_log_over(1.0 / tc.delta, 2.0 * n);
    let range = 2.0 * tc.b_ref * sqrt_log_over(2.0 / tc.delta, 2.0 * n);
    (point, range)
}

/// Squared-error cap for `{x'beta : beta' M beta <= r}` when
/// `x' M^{-1} x <= r_x` and `y in [y_min, y_max]`: predictions lie in
/// `[-s, s]` with `s = sqrt(r_x r)`.
pub fn b_ind_linear(con: &EllipsoidConstraint, r_x: f64, y_min: f64, y_max: f64) -> f64 {
    let s = (r_x * con.radius).sqrt();
    (y_min - s).powi(2).max((y_max + s).powi(2))
}

/// Squared-error cap for a kernel class when `v(x)' K_D^{-1} v(x) <= r_d`.
///
/// Predictions lie in `[mu - s, mu + s]` with `s = sqrt(r_d r_k)`. The
/// published closed form `max[(y_min - mu - s)^2, (y_max + mu + s)^2]`
/// undercounts when `mu < 0`, so the exact range cap is folded in.
pub fn b_ind_rkhs(class: &RkhsClass, r_d: f64, y_min: f64, y_max: f64) -> f64 {
    let s = (r_d * class.r_k).sqrt();
    let mu = class.mu;
    let published = (y_min - (mu + s)).powi(2).max((y_max + (mu + s)).powi(2));
    let exact = (y_min - mu - s).powi(2).max((y_max - mu + s).powi(2));
    published.max(exact)
}

/// Largest `x' M^{-1} x` over the rows of `x`.
pub fn estimate_r_x(con: &EllipsoidConstraint, x: &DMatrix<f64>) -> Result<f64> {
    if x.ncols() != con.dim() {
        return Err(Error::DimensionMismatch(format!("{} columns for a {}-dim constraint", x.ncols(), con.dim())));
    }
    let chol = con.m.clone().cholesky().ok_or(Error::SingularConstraint)?;
    Ok(max_inverse_form(&chol, (0..x.nrows()).map(|i| x.row(i).transpose())))
}

/// Largest `v(x)' K_D^{-1} v(x)` over the rows of `x`, where `v(x)` holds the
/// kernel evaluations against the dictionary.
pub fn estimate_r_d(class: &RkhsClass, x: &DMatrix<f64>) -> Result<f64> {
    let feats = crate::rkhs_class::kernel_features(x, class)?;
    let chol = class.gram().clone().cholesky().ok_or(Error::SingularConstraint)?;
    Ok(max_inverse_form(&chol, (0..feats.nrows()).map(|i| feats.row(i).transpose())))
}

fn max_inverse_form(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, rows: impl Iterator<Item = DVector<f64>>) -> f64 {
    rows.map(|v| v.dot(&chol.solve(&v))).fold(0.0, f64::max)
}

/// Covering number `ceil(c / (2r))` (at least 1) of the segment of linear
/// models between two parameter vectors whose predictions differ by at most `c`.
pub fn covering_segment(c: f64, r: f64) -> u64 {
    if !(c > 0.0) || !(r > 0.0) {
        return 1;
    }
    let k = (c / (2.0 * r)).ceil();
    if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        (k as u64).max(1)
    }
}

/// Largest absolute prediction gap `|x'(theta_plus - theta_orig)|` over rows.
pub fn convex_path_gap(theta_orig: &[f64], theta_plus: &[f64], x: &DMatrix<f64>) -> Result<f64> {
    if theta_orig.len() != theta_plus.len() || theta_orig.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "parameter lengths {} and {} with {} columns",
            theta_orig.len(),
            theta_plus.len(),
            x.ncols()
        )));
    }
    let diff = DVector::from_iterator(theta_orig.len(), theta_plus.iter().zip(theta_orig).map(|(a, b)| a - b));
    Ok((x * diff).iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Floor on the original loss: `fraction` times the cross-validated loss of
/// a flexible kernel model fit to `train`.
pub fn estimate_b_orig(train: &Dataset, kernel: KernelSpec, r_k: f64, folds: usize, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    Ok(fraction * cross_validated_loss(train, kernel, r_k, folds)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_degenerate() {
        let tc = TheoryConstants { b_ind: 0.0, b_ref: 0.0, b_orig: 1.0, b_switch: 1.0, n: 10, delta: 0.05 };
        let r = outer_bounds(&tc, 0.3, RelianceMode::Ratio).unwrap();
        assert_eq!(r.epsilon_adjusted, 0.3);
        assert_eq!(r.q, 0.0);
    }

    #[test]
    fn ratio_requires_ordered_aggregate_bounds() {
        let tc = TheoryConstants { b_ind: 1.0, b_ref: 1.0, b_orig: 2.0, b_switch: 1.0, n: 10, delta: 0.05 };
        assert!(matches!(outer_bounds(&tc, 0.0, RelianceMode::Ratio), Err(Error::InvalidConstants(_))));
        assert!(outer_bounds(&tc, 0.0, RelianceMode::Difference).is_ok());
    }

    #[test]
    fn covering_segment_cases() {
        assert_eq!(covering_segment(1.0, 0.1), 5);
        assert_eq!(covering_segment(0.2, 0.1), 1);
        assert_eq!(covering_segment(0.0, 0.1), 1);
    }
}
