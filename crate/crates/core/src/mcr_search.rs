//! Search for empirical model class reliance bounds.
//!
//! A minus-side probe at weight `gamma` minimizes `gamma e_orig + e_switch`
//! over the class; a plus-side probe minimizes `e_orig + gamma e_switch`.
//! Every probe with a nonnegative minimum yields a bound on the reliance of
//! all class members with `e_orig <= eps_abs`, for every `eps_abs` at once:
//!
//! - minus side: `MR(f) >= h / eps_abs - gamma`
//! - plus side (`gamma < 0`): `MR(f) <= (h / eps_abs - 1) / gamma`
//!
//! The searches look for the weight at which the probe minimizer sits on the
//! performance boundary, where these bounds are attained.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{PredictionModel, SwitchEstimator};
use crate::linear_class::QuadraticObjective;

/// Result of minimizing `xi_orig e_orig + xi_switch e_switch` over a class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMinimizer {
    /// Class-specific parameter vector of the minimizer.
    pub params: Vec<f64>,
    pub objective: f64,
    pub e_orig: f64,
    pub e_switch: f64,
}

/// A model class whose loss combinations can be minimized globally.
pub trait SolvableClass: Sync {
    /// Global minimizer of `xi_orig e_orig + xi_switch e_switch`. Returns
    /// [`Error::UnboundedCombination`] when the combination has no minimum.
    fn minimize_combination(&self, xi_orig: f64, xi_switch: f64) -> Result<ClassMinimizer>;

    /// `(e_orig, e_switch)` of the member with the given parameters.
    fn losses(&self, params: &[f64]) -> (f64, f64);

    /// Switched-loss estimator the class objectives are built with.
    fn estimator(&self) -> SwitchEstimator;

    /// Whether the class and loss guarantee that, when X1 is independent of
    /// everything else, some best-in-class member ignores X1. When true (and
    /// the all-pairs estimator is used) the gamma = 0 minus probe has
    /// reliance at most one.
    fn independence_condition(&self) -> bool;

    fn param_dim(&self) -> usize;

    /// `e_orig` as a quadratic in the parameters.
    fn original_quadratic(&self) -> QuadraticObjective;

    /// Global minimizer over the class of an arbitrary quadratic in the
    /// parameters. Returns [`Error::UnboundedCombination`] when it has none.
    fn minimize_quadratic(&self, objective: &QuadraticObjective) -> Result<Vec<f64>>;

    /// Membership test for the class constraint, with relative slack.
    fn is_feasible(&self, params: &[f64], rel_slack: f64) -> bool;

    fn prediction_model(&self, params: &[f64]) -> Box<dyn PredictionModel>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Minus,
    Plus,
}

/// One probe: the minimizer of the side's loss combination at `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaProbe {
    pub gamma: f64,
    pub side: Side,
    /// Minimum of `gamma e_orig + e_switch` (minus) or `e_orig + gamma e_switch` (plus).
    pub h_value: f64,
    pub e_orig: f64,
    pub e_switch: f64,
    /// Parameters of the minimizing model.
    pub params: Vec<f64>,
}

impl GammaProbe {
    /// Ratio reliance of the probe's minimizer.
    pub fn reliance(&self) -> f64 {
        self.e_switch / self.e_orig
    }
}

/// Tolerances and limits of the searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Stop once the gamma bracket is narrower than this.
    pub tol: f64,
    pub max_iters: usize,
    /// Slack on `h >= 0` absorbing solver noise.
    pub condition_tol: f64,
    /// Relative slack on `e_orig <= eps_abs`.
    pub loss_rel_tol: f64,
    /// Relative distance `|e_orig - eps_abs| / eps_abs` counted as equality.
    pub tight_rel_tol: f64,
    /// `|h|` counted as zero for the equality check.
    pub tight_h_tol: f64,
    /// Largest `|gamma|` tried while bracketing.
    pub max_abs_gamma: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iters: 60,
            condition_tol: 1e-9,
            loss_rel_tol: 1e-12,
            tight_rel_tol: 1e-6,
            tight_h_tol: 1e-9,
            max_abs_gamma: 1e12,
        }
    }
}

impl SearchOptions {
    fn holds(&self, p: &GammaProbe, eps_abs: f64) -> bool {
        p.h_value >= -self.condition_tol && p.e_orig <= eps_abs * (1.0 + self.loss_rel_tol)
    }

    fn equality(&self, p: &GammaProbe, eps_abs: f64) -> bool {
        (p.e_orig - eps_abs).abs() <= self.tight_rel_tol * eps_abs || p.h_value.abs() <= self.tight_h_tol
    }
}

/// Bounds for one performance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McrBoundResult {
    pub eps_abs: f64,
    /// Lower bound on the smallest reliance in the Rashomon set (`-inf` if none).
    pub lower: f64,
    /// Upper bound on the largest reliance in the Rashomon set (`+inf` if none).
    pub upper: f64,
    pub lower_tight: bool,
    pub upper_tight: bool,
    /// The gamma = 0 minus probe lies in the Rashomon set and has reliance
    /// at most one, so the smallest reliance is at most one.
    pub minus_at_most_one: bool,
    /// Smallest reliance among evaluated minus probes inside the Rashomon set.
    pub lower_witness: Option<f64>,
    /// Largest reliance among evaluated plus probes inside the Rashomon set.
    pub upper_witness: Option<f64>,
    /// Bounds on `e_switch - e_orig` over the Rashomon set from the same probes.
    pub lower_difference: f64,
    pub upper_difference: f64,
    pub probes: Vec<GammaProbe>,
    /// Weights whose combination was unbounded below.
    pub unbounded_gammas: Vec<(Side, f64)>,
}

fn make_probe(class: &dyn SolvableClass, side: Side, gamma: f64) -> Result<GammaProbe> {
    let (xo, xs) = match side {
        Side::Minus => (gamma, 1.0),
        Side::Plus => (1.0, gamma),
    };
    let m = class.minimize_combination(xo, xs)?;
    Ok(GammaProbe { gamma, side, h_value: m.objective, e_orig: m.e_orig, e_switch: m.e_switch, params: m.params })
}

/// Minimize `gamma e_orig + e_switch` over the class.
pub fn probe_minus(class: &dyn SolvableClass, gamma: f64) -> Result<GammaProbe> {
    make_probe(class, Side::Minus, gamma)
}

/// Minimize `e_orig + gamma e_switch` over the class (`gamma <= 0`).
pub fn probe_plus(class: &dyn SolvableClass, gamma: f64) -> Result<GammaProbe> {
    if gamma > 0.0 {
        return Err(Error::InvalidArgument(format!("plus-side gamma must be <= 0, got {gamma}")));
    }
    make_probe(class, Side::Plus, gamma)
}

/// Best lower bound over minus probes with nonnegative `h`.
pub fn lower_bound_at(probes: &[GammaProbe], eps_abs: f64) -> f64 {
    best_lower(probes, eps_abs, 1e-9).map_or(f64::NEG_INFINITY, |(v, _)| v)
}

/// Best upper bound over plus probes with `gamma < 0` and nonnegative `h`.
pub fn upper_bound_at(probes: &[GammaProbe], eps_abs: f64) -> f64 {
    best_upper(probes, eps_abs, 1e-9).map_or(f64::INFINITY, |(v, _)| v)
}

fn best_lower(probes: &[GammaProbe], eps_abs: f64, h_tol: f64) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (k, p) in probes.iter().enumerate() {
        if p.side != Side::Minus || p.h_value < -h_tol {
            continue;
        }
        let b = p.h_value / eps_abs - p.gamma;
        if best.is_none_or(|(v, _)| b > v) {
            best = Some((b, k));
        }
    }
    best
}

fn best_upper(probes: &[GammaProbe], eps_abs: f64, h_tol: f64) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (k, p) in probes.iter().enumerate() {
        if p.side != Side::Plus || p.gamma >= 0.0 || p.h_value < -h_tol {
            continue;
        }
        let b = (p.h_value / eps_abs - 1.0) / p.gamma;
        if best.is_none_or(|(v, _)| b < v) {
            best = Some((b, k));
        }
    }
    best
}

/// Lower bound on `e_switch - e_orig` over `{e_orig <= eps_abs}` from minus
/// probes with `gamma >= -1`: `h - (gamma + 1) eps_abs`.
pub fn lower_difference_bound_at(probes: &[GammaProbe], eps_abs: f64) -> f64 {
    probes
        .iter()
        .filter(|p| p.side == Side::Minus && p.gamma >= -1.0)
        .map(|p| p.h_value - (p.gamma + 1.0) * eps_abs)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Upper bound on `e_switch - e_orig` over `{e_orig <= eps_abs}` from plus
/// probes with `-1 <= gamma < 0`: `h / gamma - eps_abs (1 + 1/gamma)`.
pub fn upper_difference_bound_at(probes: &[GammaProbe], eps_abs: f64) -> f64 {
    probes
        .iter()
        .filter(|p| p.side == Side::Plus && p.gamma >= -1.0 && p.gamma < 0.0)
        .map(|p| p.h_value / p.gamma - eps_abs * (1.0 + 1.0 / p.gamma))
        .fold(f64::INFINITY, f64::min)
}

/// Memo of probe outcomes keyed by side and gamma; probes do not depend on
/// the performance threshold, so one cache serves a whole bound curve.
#[derive(Debug, Default)]
pub struct ProbeCache {
    entries: Mutex<HashMap<(Side, u64), Option<GammaProbe>>>,
    solver_calls: AtomicUsize,
}

impl ProbeCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of class minimizations performed through this cache.
    pub fn solver_calls(&self) -> usize {
        self.solver_calls.load(Ordering::SeqCst)
    }

    /// Probe at `gamma`, `None` when the combination is unbounded.
    pub fn probe(&self, class: &dyn SolvableClass, side: Side, gamma: f64) -> Result<Option<GammaProbe>> {
        let gamma = if gamma == 0.0 { 0.0 } else { gamma };
        let key = (side, gamma.to_bits());
        if let Some(hit) = self.entries.lock().expect("probe cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        self.solver_calls.fetch_add(1, Ordering::SeqCst);
        let outcome = match make_probe(class, side, gamma) {
            Ok(p) => Some(p),
            Err(Error::UnboundedCombination { .. }) => None,
            Err(e) => return Err(e),
        };
        self.entries.lock().expect("probe cache poisoned").insert(key, outcome.clone());
        Ok(outcome)
    }

    /// All bounded probes, sorted by side then gamma.
    pub fn probes(&self) -> Vec<GammaProbe> {
        let map = self.entries.lock().expect("probe cache poisoned");
        let mut v: Vec<GammaProbe> = map.values().flatten().cloned().collect();
        v.sort_by(|a, b| a.side.cmp(&b.side).then(a.gamma.total_cmp(&b.gamma)));
        v
    }

    /// Weights whose combinations were unbounded, sorted.
    pub fn unbounded(&self) -> Vec<(Side, f64)> {
        let map = self.entries.lock().expect("probe cache poisoned");
        let mut v: Vec<(Side, f64)> =
            map.iter().filter(|(_, p)| p.is_none()).map(|((s, g), _)| (*s, f64::from_bits(*g))).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    }
}

/// Smallest empirical loss attainable in the class.
fn min_loss(class: &dyn SolvableClass, cache: &ProbeCache) -> Result<f64> {
    let erm = cache.probe(class, Side::Plus, 0.0)?.ok_or(Error::UnboundedCombination { xi_orig: 1.0, xi_switch: 0.0 })?;
    Ok(erm.e_orig)
}

fn check_feasible(class: &dyn SolvableClass, eps_abs: f64, cache: &ProbeCache) -> Result<()> {
    if !(eps_abs > 0.0) || !eps_abs.is_finite() {
        return Err(Error::InvalidArgument(format!("eps_abs must be positive and finite, got {eps_abs}")));
    }
    let min_loss = min_loss(class, cache)?;
    if eps_abs < min_loss * (1.0 - 1e-12) {
        return Err(Error::InfeasibleEpsilon { eps_abs, min_loss });
    }
    Ok(())
}

/// Evaluation of a bracket endpoint: `phi = min(h, eps_abs - e_orig)`,
/// increasing in gamma on both sides, with `holds` the tolerance-aware sign.
#[derive(Clone, Copy)]
struct Point {
    gamma: f64,
    phi: f64,
}

struct Evaluation {
    point: Point,
    holds: bool,
    tight: bool,
}

fn evaluate(
    class: &dyn SolvableClass,
    cache: &ProbeCache,
    side: Side,
    gamma: f64,
    eps_abs: f64,
    opts: &SearchOptions,
) -> Result<Evaluation> {
    Ok(match cache.probe(class, side, gamma)? {
        None => Evaluation { point: Point { gamma, phi: f64::NEG_INFINITY }, holds: false, tight: false },
        Some(p) => {
            let holds = opts.holds(&p, eps_abs);
            let phi = p.h_value.min(eps_abs - p.e_orig);
            let tight = holds && opts.equality(&p, eps_abs) && (side == Side::Minus || gamma < 0.0);
            Evaluation { point: Point { gamma, phi }, holds, tight }
        }
    })
}

/// Shrink `[lo, hi]` (condition fails at `lo`, holds at `hi`) by regula falsi
/// with the Illinois modification, falling back to bisection when an
/// endpoint is unbounded or the bracket stops halving.
#[allow(clippy::too_many_arguments)]
fn refine(
    class: &dyn SolvableClass,
    cache: &ProbeCache,
    side: Side,
    eps_abs: f64,
    opts: &SearchOptions,
    mut lo: Point,
    mut hi: Point,
    iters_used: usize,
) -> Result<()> {
    let mut phi_lo = lo.phi.min(-f64::MIN_POSITIVE);
    let mut phi_hi = hi.phi.max(0.0);
    let mut last_kept: Option<bool> = None; // Some(true): hi moved last
    let mut widths = vec![hi.gamma - lo.gamma];
    for _ in iters_used..opts.max_iters {
        let width = hi.gamma - lo.gamma;
        let need_negative = side == Side::Plus && hi.gamma >= 0.0;
        if width < opts.tol && !need_negative {
            break;
        }
        if width <= f64::EPSILON * hi.gamma.abs().max(lo.gamma.abs()).max(1.0) {
            break;
        }
        let stalled = widths.len() >= 3 && widths[widths.len() - 1] > 0.5 * widths[widths.len() - 3];
        let mid = 0.5 * (lo.gamma + hi.gamma);
        let mut g = if phi_lo.is_finite() && phi_hi.is_finite() && !stalled {
            hi.gamma - phi_hi * (hi.gamma - lo.gamma) / (phi_hi - phi_lo)
        } else {
            mid
        };
        if !(g > lo.gamma && g < hi.gamma) {
            g = mid;
        }
        if stalled {
            widths.clear();
        }
        let ev = evaluate(class, cache, side, g, eps_abs, opts)?;
        if ev.holds {
            hi = ev.point;
            phi_hi = ev.point.phi.max(0.0);
            if last_kept == Some(true) {
                phi_lo *= 0.5;
            }
            last_kept = Some(true);
            if ev.tight {
                break;
            }
        } else {
            lo = ev.point;
            phi_lo = ev.point.phi.min(-f64::MIN_POSITIVE);
            if last_kept == Some(false) {
                phi_hi *= 0.5;
            }
            last_kept = Some(false);
        }
        widths.push(hi.gamma - lo.gamma);
    }
    Ok(())
}

fn minus_search(class: &dyn SolvableClass, eps_abs: f64, opts: &SearchOptions, cache: &ProbeCache) -> Result<bool> {
    check_feasible(class, eps_abs, cache)?;
    let zero = evaluate(class, cache, Side::Minus, 0.0, eps_abs, opts)?;
    if zero.tight {
        return Ok(false);
    }
    let shortcut_allowed = class.estimator() == SwitchEstimator::Switch && class.independence_condition();
    if zero.holds {
        let p0 = cache.probe(class, Side::Minus, 0.0)?.expect("evaluated above");
        if shortcut_allowed {
            return Ok(p0.reliance() <= 1.0 + 1e-8);
        }
        if class.estimator() == SwitchEstimator::Divide {
            return Ok(false);
        }
        // Without the independence guarantee the boundary weight may be negative.
        let mut hi = zero.point;
        let mut g = -1.0;
        let mut iters = 0;
        loop {
            let ev = evaluate(class, cache, Side::Minus, g, eps_abs, opts)?;
            iters += 1;
            if ev.tight {
                return Ok(false);
            }
            if !ev.holds {
                refine(class, cache, Side::Minus, eps_abs, opts, ev.point, hi, iters)?;
                return Ok(false);
            }
            hi = ev.point;
            if g.abs() >= opts.max_abs_gamma || iters >= opts.max_iters {
                return Ok(false);
            }
            g *= 2.0;
        }
    }
    let mut lo = zero.point;
    let mut g = 1.0;
    let mut iters = 0;
    loop {
        let ev = evaluate(class, cache, Side::Minus, g, eps_abs, opts)?;
        iters += 1;
        if ev.tight {
            return Ok(false);
        }
        if ev.holds {
            refine(class, cache, Side::Minus, eps_abs, opts, lo, ev.point, iters)?;
            return Ok(false);
        }
        lo = ev.point;
        if g >= opts.max_abs_gamma || iters >= opts.max_iters {
            return Ok(false);
        }
        g *= 2.0;
    }
}

fn plus_search(class: &dyn SolvableClass, eps_abs: f64, opts: &SearchOptions, cache: &ProbeCache) -> Result<()> {
    check_feasible(class, eps_abs, cache)?;
    let zero = evaluate(class, cache, Side::Plus, 0.0, eps_abs, opts)?;
    let first = evaluate(class, cache, Side::Plus, -1.0, eps_abs, opts)?;
    if first.tight {
        return Ok(());
    }
    if !first.holds {
        refine(class, cache, Side::Plus, eps_abs, opts, first.point, zero.point, 1)?;
    } else {
        let mut hi = first.point;
        let mut g = -2.0;
        let mut iters = 1;
        loop {
            let ev = evaluate(class, cache, Side::Plus, g, eps_abs, opts)?;
            iters += 1;
            if ev.tight {
                break;
            }
            if !ev.holds {
                refine(class, cache, Side::Plus, eps_abs, opts, ev.point, hi, iters)?;
                break;
            }
            hi = ev.point;
            if g.abs() >= opts.max_abs_gamma || iters >= opts.max_iters {
                break;
            }
            g *= 2.0;
        }
    }
    let probes = cache.probes();
    let any_bounded_negative = probes.iter().any(|p| p.side == Side::Plus && p.gamma < 0.0);
    if !any_bounded_negative {
        return Err(Error::AllProbesUnbounded);
    }
    Ok(())
}

/// Assemble bounds for `eps_abs` from every probe in `probes`.
fn envelope(
    probes: Vec<GammaProbe>,
    unbounded: Vec<(Side, f64)>,
    eps_abs: f64,
    opts: &SearchOptions,
    minus_at_most_one: bool,
) -> McrBoundResult {
    let lower = best_lower(&probes, eps_abs, opts.condition_tol);
    let upper = best_upper(&probes, eps_abs, opts.condition_tol);
    let tight = |k: usize| opts.holds(&probes[k], eps_abs) && opts.equality(&probes[k], eps_abs);
    let in_set = |p: &&GammaProbe| p.e_orig <= eps_abs * (1.0 + opts.loss_rel_tol) && p.e_orig > 0.0;
    let lower_witness =
        probes.iter().filter(|p| p.side == Side::Minus).filter(in_set).map(|p| p.reliance()).reduce(f64::min);
    let upper_witness =
        probes.iter().filter(|p| p.side == Side::Plus).filter(in_set).map(|p| p.reliance()).reduce(f64::max);
    McrBoundResult {
        eps_abs,
        lower: lower.map_or(f64::NEG_INFINITY, |(v, _)| v),
        upper: upper.map_or(f64::INFINITY, |(v, _)| v),
        lower_tight: lower.is_some_and(|(_, k)| tight(k)),
        upper_tight: upper.is_some_and(|(_, k)| tight(k)),
        minus_at_most_one,
        lower_witness,
        upper_witness,
        lower_difference: lower_difference_bound_at(&probes, eps_abs),
        upper_difference: upper_difference_bound_at(&probes, eps_abs),
        probes,
        unbounded_gammas: unbounded,
    }
}

fn side_only(cache: &ProbeCache, side: Side) -> (Vec<GammaProbe>, Vec<(Side, f64)>) {
    let probes = cache.probes().into_iter().filter(|p| p.side == side).collect();
    let unbounded = cache.unbounded().into_iter().filter(|(s, _)| *s == side).collect();
    (probes, unbounded)
}

/// Lower-bound search: the smallest nonnegative weight at which the minus
/// probe's minimizer has `e_orig <= eps_abs` (and `h >= 0`).
pub fn search_mcr_minus(class: &dyn SolvableClass, eps_abs: f64, opts: &SearchOptions) -> Result<McrBoundResult> {
    let cache = ProbeCache::new();
    let at_most_one = minus_search(class, eps_abs, opts, &cache)?;
    let (probes, unbounded) = side_only(&cache, Side::Minus);
    Ok(envelope(probes, unbounded, eps_abs, opts, at_most_one))
}

/// Upper-bound search: the most negative weight at which the plus probe's
/// minimizer still has `e_orig <= eps_abs` and `h >= 0`.
pub fn search_mcr_plus(class: &dyn SolvableClass, eps_abs: f64, opts: &SearchOptions) -> Result<McrBoundResult> {
    let cache = ProbeCache::new();
    plus_search(class, eps_abs, opts, &cache)?;
    let (probes, unbounded) = side_only(&cache, Side::Plus);
    Ok(envelope(probes, unbounded, eps_abs, opts, false))
}

/// Both searches for one threshold, sharing a cache.
pub fn search_mcr(class: &dyn SolvableClass, eps_abs: f64, opts: &SearchOptions) -> Result<McrBoundResult> {
    let cache = ProbeCache::new();
    let at_most_one = minus_search(class, eps_abs, opts, &cache)?;
    plus_search(class, eps_abs, opts, &cache)?;
    Ok(envelope(cache.probes(), cache.unbounded(), eps_abs, opts, at_most_one))
}

/// Bounds over a grid of thresholds. Searches run in grid order through one
/// shared cache; each reported bound uses every probe evaluated for any grid
/// point, so lower bounds are nonincreasing and upper bounds nondecreasing in
/// `eps_abs`.
pub fn bound_curve(class: &dyn SolvableClass, eps_grid: &[f64], opts: &SearchOptions) -> Result<Vec<McrBoundResult>> {
    let cache = ProbeCache::new();
    bound_curve_with_cache(class, eps_grid, opts, &cache)
}

/// [`bound_curve`] with a caller-supplied cache (for instrumentation or reuse).
pub fn bound_curve_with_cache(
    class: &dyn SolvableClass,
    eps_grid: &[f64],
    opts: &SearchOptions,
    cache: &ProbeCache,
) -> Result<Vec<McrBoundResult>> {
    let mut at_most_one = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        at_most_one.push(minus_search(class, eps, opts, cache)?);
        plus_search(class, eps, opts, cache)?;
    }
    let probes = cache.probes();
    let unbounded = cache.unbounded();
    Ok(eps_grid
        .iter()
        .zip(at_most_one)
        .map(|(&eps, one)| envelope(probes.clone(), unbounded.clone(), eps, opts, one))
        .collect())
}
