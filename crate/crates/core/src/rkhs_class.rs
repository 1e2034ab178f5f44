//! Kernel regression class `f(x) = mu + sum_r k(x, D_r) alpha_r` with an RBF
//! kernel, dictionary atoms `D`, and RKHS-norm constraint
//! `alpha' K_D alpha <= r_k`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{PredictionModel, SwitchEstimator};
use crate::linalg::symmetrize;
use crate::linear_class::{EllipsoidConstraint, QuadraticObjective};
use crate::mcr_search::{ClassMinimizer, SolvableClass};
use crate::qp1qc::{solve_qp1qc, DEFAULT_RTOL};

/// Default cap on the number of entries of the explicit switched feature matrix.
pub const DEFAULT_PAIR_BUDGET: u128 = 200_000_000;

/// Radial basis function kernel `k(x, x') = exp(-||x - x'||^2 / (2 sigma))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Rbf { sigma: f64 },
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("RBF sigma must be positive, got {sigma}")));
        }
        Ok(KernelSpec::Rbf { sigma })
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            KernelSpec::Rbf { sigma } => sigma,
        }
    }

    pub fn evaluate(&self, x: &[f64], z: &[f64]) -> f64 {
        (-sq_dist(x, z) / (2.0 * self.sigma())).exp()
    }
}

fn sq_dist(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Dictionary, kernel, offset and norm radius of a kernel class.
#[derive(Debug, Clone)]
pub struct RkhsClass {
    /// Row-major `R x p` dictionary; the first `p1` columns pair with X1.
    dictionary: Vec<f64>,
    atoms: usize,
    p1: usize,
    p2: usize,
    pub kernel: KernelSpec,
    pub mu: f64,
    pub r_k: f64,
    /// Dictionary Gram matrix (jittered when needed).
    k_d: DMatrix<f64>,
    jitter: f64,
}

impl RkhsClass {
    /// Class with an explicit dictionary given as an `R x (p1 + p2)` matrix.
    pub fn new(dictionary: &DMatrix<f64>, p1: usize, kernel: KernelSpec, mu: f64, r_k: f64) -> Result<Self> {
        let atoms = dictionary.nrows();
        let p = dictionary.ncols();
        if p1 == 0 || p1 > p {
            return Err(Error::DimensionMismatch(format!("X1 width {p1} invalid for dictionary width {p}")));
        }
        if atoms == 0 {
            return Err(Error::InvalidArgument("dictionary must have at least one atom".into()));
        }
        if !(r_k >= 0.0) || !r_k.is_finite() {
            return Err(Error::InvalidArgument(format!("r_k must be finite and >= 0, got {r_k}")));
        }
        let mut rows = Vec::with_capacity(atoms * p);
        for i in 0..atoms {
            rows.extend(dictionary.row(i).iter());
        }
        let mut k_d = DMatrix::from_fn(atoms, atoms, |i, j| {
            kernel.evaluate(&rows[i * p..(i + 1) * p], &rows[j * p..(j + 1) * p])
        });
        symmetrize(&mut k_d);
        let mut jitter = 0.0;
        if k_d.clone().cholesky().is_none() {
            jitter = 1e-10 * k_d.trace() / atoms as f64;
            for i in 0..atoms {
                k_d[(i, i)] += jitter;
            }
            if k_d.clone().cholesky().is_none() {
                return Err(Error::SingularConstraint);
            }
        }
        Ok(Self { dictionary: rows, atoms, p1, p2: p - p1, kernel, mu, r_k, k_d, jitter })
    }

    /// Dictionary equal to the covariate rows of `train`, offset equal to the
    /// mean outcome of `train`.
    pub fn from_training(train: &Dataset, kernel: KernelSpec, r_k: f64) -> Result<Self> {
        let mu = train.y().iter().sum::<f64>() / train.n() as f64;
        Self::new(&train.covariate_matrix(), train.p1(), kernel, mu, r_k)
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn dim(&self) -> usize {
        self.p1 + self.p2
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.k_d
    }

    /// Diagonal jitter added to make the Gram matrix positive definite.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn atom(&self, r: usize) -> &[f64] {
        let p = self.dim();
        &self.dictionary[r * p..(r + 1) * p]
    }

    pub fn constraint(&self) -> EllipsoidConstraint {
        EllipsoidConstraint { m: self.k_d.clone(), radius: self.r_k }
    }

    /// Kernel features `k((x1, x2), D_r)` for one split row.
    pub fn features(&self, x1: &[f64], x2: &[f64]) -> Vec<f64> {
        let s = 2.0 * self.kernel.sigma();
        (0..self.atoms)
            .map(|r| {
                let a = self.atom(r);
                let d = sq_dist(x1, &a[..self.p1]) + sq_dist(x2, &a[self.p1..]);
                (-d / s).exp()
            })
            .collect()
    }
}

/// `n x R` matrix of kernel evaluations between rows of `x` and the dictionary.
pub fn kernel_features(x: &DMatrix<f64>, class: &RkhsClass) -> Result<DMatrix<f64>> {
    if x.ncols() != class.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rows have {} columns, dictionary has {}",
            x.ncols(),
            class.dim()
        )));
    }
    let n = x.nrows();
    let r = class.atoms;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi: Vec<f64> = x.row(i).iter().cloned().collect();
            (0..r).map(|k| class.kernel.evaluate(&xi, class.atom(k))).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n, r, |i, k| rows[i][k]))
}

/// Member of a kernel class.
#[derive(Debug, Clone)]
pub struct RkhsModel {
    class: Arc<RkhsClass>,
    pub alpha: Vec<f64>,
}

impl RkhsModel {
    pub fn new(class: Arc<RkhsClass>, alpha: Vec<f64>) -> Self {
        Self { class, alpha }
    }

    /// RKHS norm `alpha' K_D alpha`.
    pub fn norm_sq(&self) -> f64 {
        let a = DVector::from_column_slice(&self.alpha);
        a.dot(&(&self.class.k_d * &a))
    }
}

impl PredictionModel for RkhsModel {
    fn predict(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let f = self.class.features(x1, x2);
        self.class.mu + f.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>()
    }
}

fn features_of(data: &Dataset, class: &RkhsClass) -> DMatrix<f64> {
    let n = data.n();
    let rows: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|i| class.features(data.x1_row(i), data.x2_row(i))).collect();
    DMatrix::from_fn(n, class.atoms, |i, k| rows[i][k])
}

fn centered_outcome(data: &Dataset, mu: f64) -> DVector<f64> {
    DVector::from_iterator(data.n(), data.y().iter().map(|y| y - mu))
}

fn check_width(data: &Dataset, class: &RkhsClass) -> Result<()> {
    if data.p1() != class.p1 || data.p2() != class.p2 {
        return Err(Error::DimensionMismatch(format!(
            "data blocks ({}, {}) differ from dictionary blocks ({}, {})",
            data.p1(),
            data.p2(),
            class.p1,
            class.p2
        )));
    }
    Ok(())
}

/// `e_orig(alpha) = (1/n) ||y - mu - K_orig alpha||^2`.
fn original_quadratic(data: &Dataset, class: &RkhsClass) -> QuadraticObjective {
    let n = data.n() as f64;
    let k = features_of(data, class);
    let yt = centered_outcome(data, class.mu);
    let mut q = k.transpose() * &k / n;
    symmetrize(&mut q);
    QuadraticObjective { q_matrix: q, q_vector: k.transpose() * &yt / n, constant: yt.dot(&yt) / n }
}

/// All-pairs switched loss using the RBF product structure: with
/// `A_ir = k1(x1_i, D1_r)` and `B_jr = k2(x2_j, D2_r)`, the switched feature
/// of pair `(i, j)` is `A_ir B_jr`, so the pair sums collapse to
/// `(A'A) o (B'B) - K'K` and `(A'1) o (B'y) - K'y` with `K = A o B`.
fn switch_quadratic_factorized(data: &Dataset, class: &RkhsClass) -> QuadraticObjective {
    let n = data.n();
    let nf = n as f64;
    let r = class.atoms;
    let s = 2.0 * class.kernel.sigma();
    let block = |i: usize| -> (Vec<f64>, Vec<f64>) {
        let x1 = data.x1_row(i);
        let x2 = data.x2_row(i);
        let a = (0..r).map(|k| (-sq_dist(x1, &class.atom(k)[..class.p1]) / s).exp()).collect();
        let b = (0..r).map(|k| (-sq_dist(x2, &class.atom(k)[class.p1..]) / s).exp()).collect();
        (a, b)
    };
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n).into_par_iter().map(block).collect();
    let a = DMatrix::from_fn(n, r, |i, k| rows[i].0[k]);
    let b = DMatrix::from_fn(n, r, |i, k| rows[i].1[k]);
    let k = a.component_mul(&b);
    let yt = centered_outcome(data, class.mu);
    let ones = DVector::from_element(n, 1.0);
    let mut q = (a.transpose() * &a).component_mul(&(b.transpose() * &b)) - k.transpose() * &k;
    q /= nf * (nf - 1.0);
    symmetrize(&mut q);
    let lin = ((a.transpose() * &ones).component_mul(&(b.transpose() * &yt)) - k.transpose() * &yt) / (nf * (nf - 1.0));
    QuadraticObjective { q_matrix: q, q_vector: lin, constant: yt.dot(&yt) / nf }
}

/// All-pairs switched loss assembled from the explicit `n(n-1) x R` switched
/// feature matrix, one X1 donor block at a time.
fn switch_quadratic_explicit(data: &Dataset, class: &RkhsClass, budget: u128) -> Result<QuadraticObjective> {
    let n = data.n();
    let r = class.atoms;
    let entries = n as u128 * (n as u128 - 1) * r as u128;
    if entries > budget {
        return Err(Error::PairExpansionTooLarge { entries, budget });
    }
    let yt = centered_outcome(data, class.mu);
    let partial: Vec<(DMatrix<f64>, DVector<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut ks = DMatrix::zeros(n - 1, r);
            let mut ys = DVector::zeros(n - 1);
            for (row, j) in (0..n).filter(|&j| j != i).enumerate() {
                let f = class.features(data.x1_row(i), data.x2_row(j));
                for (k, v) in f.into_iter().enumerate() {
                    ks[(row, k)] = v;
                }
                ys[row] = yt[j];
            }
            (ks.transpose() * &ks, ks.transpose() * ys)
        })
        .collect();
    let mut g = DMatrix::zeros(r, r);
    let mut v = DVector::zeros(r);
    for (gi, vi) in partial {
        g += gi;
        v += vi;
    }
    let denom = n as f64 * (n as f64 - 1.0);
    let mut g = g / denom;
    symmetrize(&mut g);
    Ok(QuadraticObjective { q_matrix: g, q_vector: v / denom, constant: yt.dot(&yt) / n as f64 })
}

/// Half-sample pairing with its `2 floor(n/2)` switched rows.
fn divide_quadratic(data: &Dataset, class: &RkhsClass) -> QuadraticObjective {
    let m = data.n() / 2;
    let r = class.atoms;
    let mut ks = DMatrix::zeros(2 * m, r);
    let mut ys = DVector::zeros(2 * m);
    let mut row = 0;
    for i in 0..m {
        for (a, b) in [(i, i + m), (i + m, i)] {
            for (k, v) in class.features(data.x1_row(a), data.x2_row(b)).into_iter().enumerate() {
                ks[(row, k)] = v;
            }
            ys[row] = data.y()[b] - class.mu;
            row += 1;
        }
    }
    let kf = (2 * m) as f64;
    let mut q = ks.transpose() * &ks / kf;
    symmetrize(&mut q);
    QuadraticObjective { q_matrix: q, q_vector: ks.transpose() * &ys / kf, constant: ys.dot(&ys) / kf }
}

/// Quadratic in `alpha` equal to `xi_orig e_orig + xi_switch e_switch` of the
/// member `f_alpha`, with the norm constraint `(K_D, r_k)`. The switched part
/// is assembled from the explicit pair expansion, bounded by `budget` entries.
pub fn rkhs_objective_with_budget(
    data: &Dataset,
    class: &RkhsClass,
    xi_orig: f64,
    xi_switch: f64,
    budget: u128,
) -> Result<(QuadraticObjective, EllipsoidConstraint)> {
    check_width(data, class)?;
    let orig = original_quadratic(data, class);
    let sw = switch_quadratic_explicit(data, class, budget)?;
    Ok((orig.combine(xi_orig, &sw, xi_switch), class.constraint()))
}

/// [`rkhs_objective_with_budget`] with the default budget.
pub fn rkhs_objective(
    data: &Dataset,
    class: &RkhsClass,
    xi_orig: f64,
    xi_switch: f64,
) -> Result<(QuadraticObjective, EllipsoidConstraint)> {
    rkhs_objective_with_budget(data, class, xi_orig, xi_switch, DEFAULT_PAIR_BUDGET)
}

/// A kernel class bound to a dataset, ready for loss-combination minimization.
#[derive(Debug, Clone)]
pub struct RkhsProblem {
    class: Arc<RkhsClass>,
    estimator: SwitchEstimator,
    orig: QuadraticObjective,
    switched: QuadraticObjective,
    constraint: EllipsoidConstraint,
}

impl RkhsProblem {
    /// Bind `class` to `data`. The all-pairs switched quadratic uses the
    /// kernel's product structure and needs no pair expansion.
    pub fn new(data: &Dataset, class: RkhsClass, estimator: SwitchEstimator) -> Result<Self> {
        check_width(data, &class)?;
        let orig = original_quadratic(data, &class);
        let switched = match estimator {
            SwitchEstimator::Switch => switch_quadratic_factorized(data, &class),
            SwitchEstimator::Divide => divide_quadratic(data, &class),
        };
        let constraint = class.constraint();
        Ok(Self { class: Arc::new(class), estimator, orig, switched, constraint })
    }

    pub fn class(&self) -> &Arc<RkhsClass> {
        &self.class
    }

    pub fn original_objective(&self) -> &QuadraticObjective {
        &self.orig
    }

    pub fn switched_objective(&self) -> &QuadraticObjective {
        &self.switched
    }

    pub fn model(&self, alpha: &[f64]) -> RkhsModel {
        RkhsModel::new(self.class.clone(), alpha.to_vec())
    }
}

impl SolvableClass for RkhsProblem {
    fn minimize_combination(&self, xi_orig: f64, xi_switch: f64) -> Result<ClassMinimizer> {
        let obj = self.orig.combine(xi_orig, &self.switched, xi_switch);
        let sol = solve_qp1qc(&obj, &self.constraint, DEFAULT_RTOL)?;
        let params: Vec<f64> = sol.argmin.iter().cloned().collect();
        let (e_orig, e_switch) = self.losses(&params);
        Ok(ClassMinimizer { objective: xi_orig * e_orig + xi_switch * e_switch, params, e_orig, e_switch })
    }

    fn losses(&self, params: &[f64]) -> (f64, f64) {
        let a = DVector::from_column_slice(params);
        (self.orig.value(&a), self.switched.value(&a))
    }

    fn estimator(&self) -> SwitchEstimator {
        self.estimator
    }

    /// A fixed offset plus kernel features that all depend on X1: only the
    /// constant member ignores X1, so no guarantee is claimed.
    fn independence_condition(&self) -> bool {
        false
    }

    fn param_dim(&self) -> usize {
        self.class.atoms
    }

    fn original_quadratic(&self) -> QuadraticObjective {
        self.orig.clone()
    }

    fn minimize_quadratic(&self, objective: &QuadraticObjective) -> Result<Vec<f64>> {
        let sol = solve_qp1qc(objective, &self.constraint, DEFAULT_RTOL)?;
        Ok(sol.argmin.iter().cloned().collect())
    }

    fn is_feasible(&self, params: &[f64], rel_slack: f64) -> bool {
        self.constraint.contains(&DVector::from_column_slice(params), rel_slack)
    }

    fn prediction_model(&self, params: &[f64]) -> Box<dyn PredictionModel> {
        Box::new(self.model(params))
    }
}

/// Log-spaced grid of `points` values between `lo` and `hi` inclusive.
pub(crate) fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
}

/// Index of the first entry within a small tolerance of the minimum.
fn first_minimizer(errors: &[f64], scale: f64) -> usize {
    let best = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (best.abs() + scale);
    errors.iter().position(|e| *e <= best + tol).unwrap_or(0)
}

/// Number of grid points used by bandwidth and radius selection.
pub const SELECTION_GRID_POINTS: usize = 25;

/// Median squared distance between distinct covariate rows.
fn median_pairwise_sq_distance(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(&rows[i], &rows[j]));
        }
    }
    if d.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateData("all covariate rows are identical".into()));
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if m > 0.0 {
        return Ok(m);
    }
    let pos: Vec<f64> = d.into_iter().filter(|v| *v > 0.0).collect();
    Ok(pos.iter().sum::<f64>() / pos.len() as f64)
}

/// Fold of row `i` under round-robin assignment.
fn fold_of(i: usize, folds: usize) -> usize {
    i % folds
}

/// Choose the RBF `sigma` minimizing the k-fold cross-validated squared error
/// of a Nadaraya-Watson smoother over a log grid spanning
/// `[1e-2, 1e2] x` the median pairwise squared distance. Ties go to the
/// first grid point.
pub fn select_bandwidth(train: &Dataset, folds: usize) -> Result<f64> {
    let n = train.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("need 2 <= folds <= n, got folds={folds}, n={n}")));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| train.full_row(i)).collect();
    let med = median_pairwise_sq_distance(&rows)?;
    let grid = log_grid(1e-2 * med, 1e2 * med, SELECTION_GRID_POINTS);
    let y = train.y();
    let dist: Vec<f64> = (0..n * n).map(|k| sq_dist(&rows[k / n], &rows[k % n])).collect();
    let errors: Vec<f64> = grid
        .par_iter()
        .map(|&sigma| {
            let mut total = 0.0;
            for i in 0..n {
                let fi = fold_of(i, folds);
                let expo: Vec<(f64, f64)> = (0..n)
                    .filter(|&j| fold_of(j, folds) != fi)
                    .map(|j| (-dist[i * n + j] / (2.0 * sigma), y[j]))
                    .collect();
                let top = expo.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
                let (mut num, mut den) = (0.0, 0.0);
                for (e, yj) in expo {
                    let w = (e - top).exp();
                    num += w * yj;
                    den += w;
                }
                let r = y[i] - num / den;
                total += r * r;
            }
            total / n as f64
        })
        .collect();
    let scale = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    Ok(grid[first_minimizer(&errors, scale)])
}

/// k-fold cross-validated squared error of the norm-constrained empirical
/// risk minimizer. In each fold the dictionary and offset come from the
/// fold's training rows.
pub fn cross_validated_loss(train: &Dataset, kernel: KernelSpec, r_k: f64, folds: usize) -> Result<f64> {
    Ok(cv_losses(train, kernel, &[r_k], folds)?[0])
}

fn cv_losses(train: &Dataset, kernel: KernelSpec, radii: &[f64], folds: usize) -> Result<Vec<f64>> {
    let n = train.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("need 2 <= folds <= n, got folds={folds}, n={n}")));
    }
    let mut totals = vec![0.0; radii.len()];
    for f in 0..folds {
        let fit_rows: Vec<usize> = (0..n).filter(|&i| fold_of(i, folds) != f).collect();
        let test_rows: Vec<usize> = (0..n).filter(|&i| fold_of(i, folds) == f).collect();
        if fit_rows.len() < 2 || test_rows.is_empty() {
            continue;
        }
        let fit = train.select_rows(&fit_rows)?;
        let test = train.select_rows(&test_rows)?;
        let per_radius: Vec<Result<f64>> = radii
            .par_iter()
            .map(|&r| {
                let class = RkhsClass::from_training(&fit, kernel, r)?;
                let obj = original_quadratic(&fit, &class);
                let sol = solve_qp1qc(&obj, &class.constraint(), DEFAULT_RTOL)?;
                let model = RkhsModel::new(Arc::new(class), sol.argmin.iter().cloned().collect());
                Ok((0..test.n())
                    .map(|i| {
                        let r = test.y()[i] - model.predict(test.x1_row(i), test.x2_row(i));
                        r * r
                    })
                    .sum::<f64>())
            })
            .collect();
        for (t, v) in totals.iter_mut().zip(per_radius) {
            *t += v?;
        }
    }
    Ok(totals.into_iter().map(|t| t / n as f64).collect())
}

/// Choose `r_k` by k-fold cross-validation over a log grid of
/// [`SELECTION_GRID_POINTS`] radii spanning `[1e-4, 1] x` the squared norm
/// of a lightly regularized kernel interpolant of the training outcomes.
/// Ties go to the smallest radius.
pub fn select_radius(train: &Dataset, kernel: KernelSpec, folds: usize) -> Result<f64> {
    let class = RkhsClass::from_training(train, kernel, 1.0)?;
    let k = class.gram().clone();
    let yt = centered_outcome(train, class.mu);
    let ridge = 1e-3 * k.trace() / class.atoms as f64;
    let reg = &k + DMatrix::identity(class.atoms, class.atoms) * ridge;
    let alpha = reg.cholesky().ok_or(Error::SingularConstraint)?.solve(&yt);
    let top = alpha.dot(&(&k * &alpha));
    if !(top > 0.0) {
        return Err(Error::DegenerateData("outcome is constant; no radius to select".into()));
    }
    let grid = log_grid(1e-4 * top, top, SELECTION_GRID_POINTS);
    let errors = cv_losses(train, kernel, &grid, folds)?;
    let scale = yt.dot(&yt) / train.n() as f64;
    Ok(grid[first_minimizer(&errors, scale)])
}
