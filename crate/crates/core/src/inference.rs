//! Bootstrap intervals for empirical MCR and Rashomon-set intervals for
//! model descriptors.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{e_orig, LossKind, PredictionModel, SwitchEstimator};
use crate::linear_class::{EllipsoidConstraint, LinearClass, QuadraticObjective};
use crate::mcr_search::{search_mcr, SearchOptions, SolvableClass};
use crate::rkhs_class::{RkhsClass, RkhsProblem};
use crate::theory_bounds::{phi_ci_epsilons, TheoryConstants};

/// A model class not yet bound to data.
#[derive(Debug, Clone)]
pub enum ClassSpec {
    Linear { intercept: bool, constraint: Option<EllipsoidConstraint>, estimator: SwitchEstimator },
    Rkhs { class: RkhsClass, estimator: SwitchEstimator },
}

impl ClassSpec {
    /// Build the class objectives on `data`.
    pub fn bind(&self, data: &Dataset) -> Result<Box<dyn SolvableClass + Send>> {
        Ok(match self {
            ClassSpec::Linear { intercept, constraint, estimator } => {
                Box::new(LinearClass::build(data, *intercept, constraint.clone(), *estimator)?)
            }
            ClassSpec::Rkhs { class, estimator } => Box::new(RkhsProblem::new(data, class.clone(), *estimator)?),
        })
    }
}

/// Settings for [`bootstrap_mcr_ci`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub seed: u64,
    /// Rashomon tolerance added to the reference model's loss.
    pub epsilon: f64,
    /// Anchor each replicate's threshold at the reference loss on that
    /// replicate (default) rather than on the full analysis sample.
    pub reanchor: bool,
    /// Largest tolerated fraction of excluded replicates.
    pub max_excluded_fraction: f64,
    #[serde(skip)]
    pub search: SearchOptions,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            replicates,
            lower_pct: 2.5,
            upper_pct: 97.5,
            seed,
            epsilon,
            reanchor: true,
            max_excluded_fraction: 0.2,
            search: SearchOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
        }
        if !(0.0 < self.lower_pct && self.lower_pct < self.upper_pct && self.upper_pct < 100.0) {
            return Err(Error::InvalidArgument(format!(
                "percentiles must satisfy 0 < lower < upper < 100, got ({}, {})",
                self.lower_pct, self.upper_pct
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Percentile interval over bootstrap replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lower: f64,
    pub upper: f64,
    /// Empirical MCR- bound per retained replicate, in replicate order.
    pub lower_draws: Vec<f64>,
    /// Empirical MCR+ bound per retained replicate, in replicate order.
    pub upper_draws: Vec<f64>,
    /// Indices of replicates whose search was infeasible or unbounded.
    pub excluded: Vec<usize>,
}

/// Linear-interpolation percentile (`pct` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = pct / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Random stream for replicate `index` under `seed`.
pub(crate) fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn resample(data: &Dataset, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let n = data.n();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    data.select_rows(&rows)
}

enum Replicate {
    Bounds(f64, f64),
    Excluded,
}

/// Bootstrap percentile interval for empirical MCR: resample `data` rows
/// with replacement, bind `class` to each resample, search both bounds at
/// `e_orig(reference) + epsilon`, and take the lower percentile of the MCR-
/// bounds and the upper percentile of the MCR+ bounds. Replicates with an
/// infeasible threshold or an unbounded search are excluded and counted.
pub fn bootstrap_mcr_ci(
    class: &ClassSpec,
    data: &Dataset,
    reference: &dyn PredictionModel,
    cfg: &BootstrapConfig,
) -> Result<BootstrapInterval> {
    cfg.validate()?;
    let fixed_loss = e_orig(reference, LossKind::SquaredError, data);
    let outcomes: Vec<Result<Replicate>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(cfg.seed, b as u64);
            let sample = resample(data, &mut rng)?;
            let anchor = if cfg.reanchor { e_orig(reference, LossKind::SquaredError, &sample) } else { fixed_loss };
            let bound = match class.bind(&sample) {
                Ok(c) => c,
                Err(Error::DegenerateData(_)) => return Ok(Replicate::Excluded),
                Err(e) => return Err(e),
            };
            match search_mcr(bound.as_ref(), anchor + cfg.epsilon, &cfg.search) {
                Ok(r) if r.lower.is_finite() && r.upper.is_finite() => Ok(Replicate::Bounds(r.lower, r.upper)),
                Ok(_) => Ok(Replicate::Excluded),
                Err(Error::InfeasibleEpsilon { .. }) | Err(Error::AllProbesUnbounded) => Ok(Replicate::Excluded),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut lower_draws = Vec::new();
    let mut upper_draws = Vec::new();
    let mut excluded = Vec::new();
    for (b, o) in outcomes.into_iter().enumerate() {
        match o? {
            Replicate::Bounds(l, u) => {
                lower_draws.push(l);
                upper_draws.push(u);
            }
            Replicate::Excluded => excluded.push(b),
        }
    }
    if excluded.len() as f64 > cfg.max_excluded_fraction * cfg.replicates as f64 || lower_draws.is_empty() {
        return Err(Error::TooManyInfeasibleReplicates { infeasible: excluded.len(), total: cfg.replicates });
    }
    Ok(BootstrapInterval {
        lower: percentile(&lower_draws, cfg.lower_pct),
        upper: percentile(&upper_draws, cfg.upper_pct),
        lower_draws,
        upper_draws,
        excluded,
    })
}

/// Function computing a custom descriptor from a model.
pub type DescriptorFn = Arc<dyn Fn(&dyn PredictionModel) -> f64 + Send + Sync>;

/// A real-valued summary of a class member.
#[derive(Clone)]
pub enum Descriptor {
    /// `weights' params + offset`; optimized exactly over the class.
    Linear { weights: Vec<f64>, offset: f64 },
    /// Any deterministic function of the prediction model; bounded by
    /// sampling the Rashomon set.
    Custom(DescriptorFn),
}

impl fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Descriptor::Linear { weights, offset } => {
                f.debug_struct("Linear").field("weights", weights).field("offset", offset).finish()
            }
            Descriptor::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Descriptor {
    /// Prediction of a linear-class member at `(x1, x2)`.
    pub fn linear_prediction(class: &LinearClass, x1: &[f64], x2: &[f64]) -> Self {
        let mut weights: Vec<f64> = x1.iter().chain(x2).cloned().collect();
        if class.has_intercept() {
            weights.push(1.0);
        }
        Descriptor::Linear { weights, offset: 0.0 }
    }

    pub fn evaluate(&self, class: &dyn SolvableClass, params: &[f64]) -> f64 {
        match self {
            Descriptor::Linear { weights, offset } => {
                weights.iter().zip(params).map(|(w, p)| w * p).sum::<f64>() + offset
            }
            Descriptor::Custom(f) => f(class.prediction_model(params).as_ref()),
        }
    }
}

/// How a descriptor interval was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhiMethod {
    Exact,
    /// Inner approximation from this many sampled members.
    SampleApproximation { samples: usize },
}

/// Interval `[min, max]` of a descriptor over an empirical Rashomon set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiInterval {
    pub lower: f64,
    pub upper: f64,
    /// Inflation added to the reference loss.
    pub epsilon: f64,
    /// Loss threshold defining the set.
    pub threshold: f64,
    pub method: PhiMethod,
}

/// Sampling budget for non-linear descriptors; `None` disables sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub samples: usize,
    pub seed: u64,
}

/// Interval for a descriptor from the empirical Rashomon set at threshold
/// `reference_loss + eps`, where `eps` is the point inflation (or the range
/// inflation when `range_mode`) implied by `tc`.
pub fn rashomon_phi_ci(
    class: &dyn SolvableClass,
    reference_loss: f64,
    phi: &Descriptor,
    tc: &TheoryConstants,
    range_mode: bool,
    sampling: Option<SamplingConfig>,
) -> Result<PhiInterval> {
    let (point, range) = phi_ci_epsilons(tc);
    let epsilon = if range_mode { range } else { point };
    let threshold = reference_loss + epsilon;
    let (lower, upper, method) = match phi {
        Descriptor::Linear { weights, offset } => {
            if weights.len() != class.param_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "descriptor has {} weights, class has {} parameters",
                    weights.len(),
                    class.param_dim()
                )));
            }
            let a = DVector::from_column_slice(weights);
            let lo = minimize_linear(class, &a, threshold)?;
            let hi = -minimize_linear(class, &(-&a), threshold)?;
            (lo + offset, hi + offset, PhiMethod::Exact)
        }
        Descriptor::Custom(_) => {
            let cfg = sampling.ok_or(Error::NonOptimizableDescriptor)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let members = sample_rashomon(class, threshold, cfg.samples, &mut rng)?;
            let vals: Vec<f64> = members.iter().map(|p| phi.evaluate(class, p)).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi, PhiMethod::SampleApproximation { samples: cfg.samples })
        }
    };
    Ok(PhiInterval { lower, upper, epsilon, threshold, method })
}

/// `min a' params` over class members with `e_orig <= threshold`, by
/// bisection on the multiplier of the loss constraint.
pub fn minimize_linear(class: &dyn SolvableClass, a: &DVector<f64>, threshold: f64) -> Result<f64> {
    let erm = class.minimize_combination(1.0, 0.0)?;
    if threshold < erm.e_orig * (1.0 - 1e-12) - 1e-15 {
        return Err(Error::InfeasibleEpsilon { eps_abs: threshold, min_loss: erm.e_orig });
    }
    let at_erm = a.dot(&DVector::from_column_slice(&erm.params));
    if a.amax() == 0.0 {
        return Ok(at_erm);
    }
    let loss = class.original_quadratic();
    // Minimizer of a'x + nu e_orig(x) and its loss; None when unbounded.
    let solve = |nu: f64| -> Result<Option<(Vec<f64>, f64)>> {
        let obj = QuadraticObjective {
            q_matrix: &loss.q_matrix * nu,
            q_vector: &loss.q_vector * nu - a * 0.5,
            constant: loss.constant * nu,
        };
        match class.minimize_quadratic(&obj) {
            Ok(x) => {
                let e = loss.value(&DVector::from_column_slice(&x));
                Ok(Some((x, e)))
            }
            Err(Error::UnboundedCombination { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let feasible = |r: &Option<(Vec<f64>, f64)>| matches!(r, Some((_, e)) if *e <= threshold);
    let mut nu_lo;
    let mut nu_hi;
    let mut best;
    let first = solve(1.0)?;
    if feasible(&first) {
        nu_hi = 1.0;
        best = first.map(|(x, _)| x);
        nu_lo = 0.5;
        loop {
            let r = solve(nu_lo)?;
            if !feasible(&r) {
                break;
            }
            best = r.map(|(x, _)| x);
            nu_hi = nu_lo;
            nu_lo *= 0.5;
            if nu_lo < 1e-300 {
                // The loss constraint never binds.
                return Ok(value_of(a, best.as_deref(), at_erm));
            }
        }
    } else {
        nu_lo = 1.0;
        nu_hi = 2.0;
        loop {
            let r = solve(nu_hi)?;
            if feasible(&r) {
                best = r.map(|(x, _)| x);
                break;
            }
            nu_lo = nu_hi;
            nu_hi *= 2.0;
            if nu_hi > 1e300 {
                return Ok(at_erm);
            }
        }
    }
    for _ in 0..200 {
        if nu_hi / nu_lo < 1.0 + 1e-14 {
            break;
        }
        let mid = (nu_lo * nu_hi).sqrt();
        let r = solve(mid)?;
        if feasible(&r) {
            best = r.map(|(x, _)| x);
            nu_hi = mid;
        } else {
            nu_lo = mid;
        }
    }
    Ok(value_of(a, best.as_deref(), at_erm))
}

fn value_of(a: &DVector<f64>, params: Option<&[f64]>, fallback: f64) -> f64 {
    params.map(|p| a.dot(&DVector::from_column_slice(p))).unwrap_or(fallback)
}

/// Draw `count` members of `{f : e_orig(f) <= threshold}` by moving from
/// the empirical risk minimizer along uniformly random directions by a
/// uniform fraction of the largest feasible step.
pub fn sample_rashomon(
    class: &dyn SolvableClass,
    threshold: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let erm = class.minimize_combination(1.0, 0.0)?;
    if threshold < erm.e_orig * (1.0 - 1e-12) - 1e-15 {
        return Err(Error::InfeasibleEpsilon { eps_abs: threshold, min_loss: erm.e_orig });
    }
    let d = class.param_dim();
    let center = DVector::from_column_slice(&erm.params);
    let inside = |x: &DVector<f64>| {
        let p: Vec<f64> = x.iter().cloned().collect();
        class.losses(&p).0 <= threshold && class.is_feasible(&p, 0.0)
    };
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100 * count.max(1) {
            break;
        }
        let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        if norm == 0.0 {
            continue;
        }
        let dir = dir / norm;
        let mut hi = 1e-6 * (1.0 + center.norm());
        let mut doublings = 0;
        while inside(&(&center + &dir * hi)) && doublings < 80 {
            hi *= 2.0;
            doublings += 1;
        }
        if doublings == 80 {
            continue;
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if inside(&(&center + &dir * mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = rng.random_range(0.0..=1.0) * lo;
        out.push((&center + &dir * t).iter().cloned().collect());
    }
    Ok(out)
}
