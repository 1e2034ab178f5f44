//! Linear model classes, the linear-time switched-loss identity, and the
//! reduction of loss combinations to quadratic objectives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{PredictionModel, SwitchEstimator};
use crate::linalg::{dot, quad_form, symmetrize};
use crate::mcr_search::{ClassMinimizer, SolvableClass};
use crate::qp1qc::{solve_qp1qc, solve_unconstrained, QpStatus, DEFAULT_RTOL};

/// `f(x) = x1' beta1 + x2' beta2 + intercept`.
///
/// The intercept behaves exactly like a coefficient on a constant X2 column:
/// it is never switched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(beta1: Vec<f64>, beta2: Vec<f64>, intercept: f64) -> Self {
        Self { beta1, beta2, intercept }
    }

    /// Split a stacked coefficient vector `(beta1, beta2)`.
    pub fn from_stacked(beta: &[f64], p1: usize, intercept: f64) -> Self {
        Self { beta1: beta[..p1].to_vec(), beta2: beta[p1..].to_vec(), intercept }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.beta1.clone();
        v.extend_from_slice(&self.beta2);
        v
    }
}

impl PredictionModel for LinearModel {
    fn predict(&self, x1: &[f64], x2: &[f64]) -> f64 {
        dot(x1, &self.beta1) + dot(x2, &self.beta2) + self.intercept
    }
}

/// `b' Q b - 2 q' b + c` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub q_matrix: DMatrix<f64>,
    pub q_vector: DVector<f64>,
    pub constant: f64,
}

impl QuadraticObjective {
    pub fn new(q_matrix: DMatrix<f64>, q_vector: DVector<f64>, constant: f64) -> Result<Self> {
        let p = q_vector.len();
        if q_matrix.nrows() != p || q_matrix.ncols() != p {
            return Err(Error::DimensionMismatch("quadratic matrix and vector sizes differ".into()));
        }
        let mut q_matrix = q_matrix;
        symmetrize(&mut q_matrix);
        Ok(Self { q_matrix, q_vector, constant })
    }

    pub fn zeros(p: usize) -> Self {
        Self { q_matrix: DMatrix::zeros(p, p), q_vector: DVector::zeros(p), constant: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.q_vector.len()
    }

    pub fn value(&self, beta: &DVector<f64>) -> f64 {
        quad_form(&self.q_matrix, beta) - 2.0 * self.q_vector.dot(beta) + self.constant
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            q_matrix: &self.q_matrix * a + &other.q_matrix * b,
            q_vector: &self.q_vector * a + &other.q_vector * b,
            constant: a * self.constant + b * other.constant,
        }
    }
}

/// `{b : b' M b <= radius}` with symmetric positive definite `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidConstraint {
    pub m: DMatrix<f64>,
    pub radius: f64,
}

impl EllipsoidConstraint {
    pub fn new(m: DMatrix<f64>, radius: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch("constraint matrix must be square".into()));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("constraint radius {radius} must be finite and >= 0")));
        }
        let mut m = m;
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(Error::SingularConstraint);
        }
        symmetrize(&mut m);
        if m.clone().cholesky().is_none() {
            return Err(Error::SingularConstraint);
        }
        Ok(Self { m, radius })
    }

    pub fn identity(p: usize, radius: f64) -> Self {
        Self { m: DMatrix::identity(p, p), radius }
    }

    pub fn diagonal(weights: &[f64], radius: f64) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(weights)), radius)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn contains(&self, beta: &DVector<f64>, rel_slack: f64) -> bool {
        quad_form(&self.m, beta) <= self.radius * (1.0 + rel_slack)
    }
}

/// Switched loss of a linear model in `O(n p)`.
///
/// With residual `r = y - X2 beta2 - intercept` and score `u = X1 beta1`, the
/// pair sum `sum_{i != j} (r_j - u_i)^2` equals
/// `(n-1)(r'r + u'u) - 2[(1'r)(1'u) - r'u]`, i.e. the weighting matrix
/// `W = (11' - I)/(n-1)` applied through its rank-one structure.
pub fn e_switch_fast(model: &LinearModel, data: &Dataset) -> f64 {
    let n = data.n();
    let nf = n as f64;
    let (mut rr, mut uu, mut sr, mut su, mut ru) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let r = data.y()[i] - dot(data.x2_row(i), &model.beta2) - model.intercept;
        let u = dot(data.x1_row(i), &model.beta1);
        rr += r * r;
        uu += u * u;
        sr += r;
        su += u;
        ru += r * u;
    }
    (rr + uu - 2.0 * (sr * su - ru) / (nf - 1.0)) / nf
}

fn gram(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b
}

/// Quadratic in the stacked coefficients `(beta1, beta2)` (no intercept;
/// callers add a constant X2 column for one) that equals
/// `xi_orig e_orig + xi_switch e_switch` of the linear model, constant included.
pub fn quadratic_combination(data: &Dataset, xi_orig: f64, xi_switch: f64) -> QuadraticObjective {
    quadratic_combination_with(data, xi_orig, xi_switch, SwitchEstimator::Switch)
}

/// As [`quadratic_combination`] with a choice of switched-loss estimator.
pub fn quadratic_combination_with(
    data: &Dataset,
    xi_orig: f64,
    xi_switch: f64,
    estimator: SwitchEstimator,
) -> QuadraticObjective {
    let orig = original_quadratic(data);
    let switched = switched_quadratic(data, estimator);
    orig.combine(xi_orig, &switched, xi_switch)
}

/// `e_orig` as a quadratic: `Q = X'X/n`, `q = X'y/n`, `c = y'y/n`.
pub fn original_quadratic(data: &Dataset) -> QuadraticObjective {
    let n = data.n() as f64;
    let x = data.covariate_matrix();
    let y = DVector::from_column_slice(data.y());
    let mut q = gram(&x, &x) / n;
    symmetrize(&mut q);
    QuadraticObjective { q_matrix: q, q_vector: x.transpose() * &y / n, constant: y.dot(&y) / n }
}

/// Switched loss as a quadratic in `(beta1, beta2)`.
pub fn switched_quadratic(data: &Dataset, estimator: SwitchEstimator) -> QuadraticObjective {
    match estimator {
        SwitchEstimator::Switch => switch_pairs_quadratic(data),
        SwitchEstimator::Divide => divide_pairs_quadratic(data),
    }
}

/// `e_switch(beta) = (1/n){y'y - 2[X1'Wy; X2'y]'beta + beta' S beta}` with
/// `S = [[X1'X1, X1'W X2], [X2'W X1, X2'X2]]` and the `W` products formed as
/// `A'W B = ((A'1)(1'B) - A'B)/(n-1)`.
fn switch_pairs_quadratic(data: &Dataset) -> QuadraticObjective {
    let n = data.n();
    let nf = n as f64;
    let (p1, p2) = (data.p1(), data.p2());
    let x1 = data.x1_matrix();
    let x2 = data.x2_matrix();
    let y = DVector::from_column_slice(data.y());
    let ones = DVector::from_element(n, 1.0);
    let x1_sum = x1.transpose() * &ones;
    let x2_sum = x2.transpose() * &ones;
    let y_sum = y.sum();

    let x1wy = (&x1_sum * y_sum - x1.transpose() * &y) / (nf - 1.0);
    let x1wx2 = (&x1_sum * x2_sum.transpose() - gram(&x1, &x2)) / (nf - 1.0);

    let p = p1 + p2;
    let mut s = DMatrix::zeros(p, p);
    s.view_mut((0, 0), (p1, p1)).copy_from(&gram(&x1, &x1));
    s.view_mut((0, p1), (p1, p2)).copy_from(&x1wx2);
    s.view_mut((p1, 0), (p2, p1)).copy_from(&x1wx2.transpose());
    s.view_mut((p1, p1), (p2, p2)).copy_from(&gram(&x2, &x2));
    symmetrize(&mut s);
    let mut lin = DVector::zeros(p);
    lin.rows_mut(0, p1).copy_from(&x1wy);
    lin.rows_mut(p1, p2).copy_from(&(x2.transpose() * &y));
    QuadraticObjective { q_matrix: s / nf, q_vector: lin / nf, constant: y.dot(&y) / nf }
}

/// Half-sample pairing: the `2 floor(n/2)` switched rows are materialized.
fn divide_pairs_quadratic(data: &Dataset) -> QuadraticObjective {
    let m = data.n() / 2;
    let p = data.p1() + data.p2();
    let mut xs = DMatrix::zeros(2 * m, p);
    let mut ys = DVector::zeros(2 * m);
    let mut row = 0;
    for i in 0..m {
        for (a, b) in [(i, i + m), (i + m, i)] {
            let mut r = data.x1_row(a).to_vec();
            r.extend_from_slice(data.x2_row(b));
            xs.row_mut(row).copy_from(&DVector::from_vec(r).transpose());
            ys[row] = data.y()[b];
            row += 1;
        }
    }
    let k = (2 * m) as f64;
    let mut q = gram(&xs, &xs) / k;
    symmetrize(&mut q);
    QuadraticObjective { q_matrix: q, q_vector: xs.transpose() * &ys / k, constant: ys.dot(&ys) / k }
}

/// Linear model class over `(beta1, beta2)` with an optional unpenalized
/// intercept and an optional ellipsoid constraint on `(beta1, beta2)`.
///
/// With an intercept, the loss quadratics are built over `(beta1, beta2, b)`
/// using a constant column and `b` is minimized out in closed form for each
/// combination, so the constraint only ever sees the slope coefficients.
#[derive(Debug, Clone)]
pub struct LinearClass {
    p1: usize,
    p2: usize,
    intercept: bool,
    constraint: Option<EllipsoidConstraint>,
    estimator: SwitchEstimator,
    /// Quadratics over `(beta1, beta2[, b])`.
    orig: QuadraticObjective,
    switched: QuadraticObjective,
    rtol: f64,
}

impl LinearClass {
    /// Unconstrained least-squares class.
    pub fn unconstrained(data: &Dataset, intercept: bool) -> Result<Self> {
        Self::build(data, intercept, None, SwitchEstimator::Switch)
    }

    /// Slopes restricted to `beta' M beta <= r`.
    pub fn ridge(data: &Dataset, intercept: bool, constraint: EllipsoidConstraint) -> Result<Self> {
        Self::build(data, intercept, Some(constraint), SwitchEstimator::Switch)
    }

    pub fn build(
        data: &Dataset,
        intercept: bool,
        constraint: Option<EllipsoidConstraint>,
        estimator: SwitchEstimator,
    ) -> Result<Self> {
        let p = data.p1() + data.p2();
        if let Some(c) = &constraint {
            if c.dim() != p {
                return Err(Error::DimensionMismatch(format!(
                    "constraint has dimension {}, class has {p} slope coefficients",
                    c.dim()
                )));
            }
        }
        let augmented;
        let design = if intercept {
            augmented = data.with_intercept_column();
            &augmented
        } else {
            data
        };
        Ok(Self {
            p1: data.p1(),
            p2: data.p2(),
            intercept,
            constraint,
            estimator,
            orig: original_quadratic(design),
            switched: switched_quadratic(design, estimator),
            rtol: DEFAULT_RTOL,
        })
    }

    /// Number of slope coefficients.
    pub fn slope_dim(&self) -> usize {
        self.p1 + self.p2
    }

    /// Length of the parameter vector `(beta1, beta2[, b])`.
    pub fn param_dim(&self) -> usize {
        self.slope_dim() + usize::from(self.intercept)
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn constraint(&self) -> Option<&EllipsoidConstraint> {
        self.constraint.as_ref()
    }

    pub fn original_objective(&self) -> &QuadraticObjective {
        &self.orig
    }

    pub fn switched_objective(&self) -> &QuadraticObjective {
        &self.switched
    }

    pub fn model(&self, params: &[f64]) -> LinearModel {
        let p = self.slope_dim();
        let b = if self.intercept { params[p] } else { 0.0 };
        LinearModel::from_stacked(&params[..p], self.p1, b)
    }

    /// Parameter vector of a model.
    pub fn params_of(&self, model: &LinearModel) -> Vec<f64> {
        let mut v = model.stacked();
        if self.intercept {
            v.push(model.intercept);
        }
        v
    }

    /// Minimize `xi_orig e_orig + xi_switch e_switch` over the class.
    fn minimize(&self, xi_orig: f64, xi_switch: f64) -> Result<ClassMinimizer> {
        let full = self.orig.combine(xi_orig, &self.switched, xi_switch);
        let params = self
            .minimize_over_class(&full, xi_orig.abs() + xi_switch.abs())
            .map_err(|e| match e {
                Error::UnboundedCombination { .. } => Error::UnboundedCombination { xi_orig, xi_switch },
                other => other,
            })?;
        let (e_orig, e_switch) = self.losses(&params);
        Ok(ClassMinimizer { objective: xi_orig * e_orig + xi_switch * e_switch, params, e_orig, e_switch })
    }

    /// Global minimizer over the class of a quadratic in the parameters;
    /// `scale` sets the tolerance for a vanishing intercept curvature.
    fn minimize_over_class(&self, full: &QuadraticObjective, scale: f64) -> Result<Vec<f64>> {
        let unbounded = || Error::UnboundedCombination { xi_orig: f64::NAN, xi_switch: f64::NAN };
        let (reduced, intercept_map) = if self.intercept {
            profile_last_coordinate(full, &self.orig, scale).ok_or_else(unbounded)?
        } else {
            (full.clone(), InterceptMap::None)
        };
        let sol = match &self.constraint {
            Some(c) => solve_qp1qc(&reduced, c, self.rtol)?,
            None => solve_unconstrained(&reduced),
        };
        if sol.status == QpStatus::Unbounded {
            return Err(unbounded());
        }
        let mut params: Vec<f64> = sol.argmin.iter().cloned().collect();
        if self.intercept {
            params.push(intercept_map.intercept(&sol.argmin));
        }
        Ok(params)
    }
}

/// How the intercept is recovered from the slopes after profiling.
enum InterceptMap {
    None,
    /// `b = (q_b - Q_b. beta) / Q_bb`
    Affine { q_b: f64, row: DVector<f64>, q_bb: f64 },
}

impl InterceptMap {
    fn intercept(&self, beta: &DVector<f64>) -> f64 {
        match self {
            InterceptMap::None => 0.0,
            InterceptMap::Affine { q_b, row, q_bb } => (q_b - row.dot(beta)) / q_bb,
        }
    }
}

/// Minimize a quadratic over its last coordinate in closed form. Returns
/// `None` when the objective is unbounded in that coordinate. When the last
/// coordinate drops out entirely, it is set to minimize `tie_break`.
fn profile_last_coordinate(
    full: &QuadraticObjective,
    tie_break: &QuadraticObjective,
    weight_scale: f64,
) -> Option<(QuadraticObjective, InterceptMap)> {
    let k = full.dim() - 1;
    let q_bb = full.q_matrix[(k, k)];
    let row: DVector<f64> = DVector::from_iterator(k, (0..k).map(|j| full.q_matrix[(k, j)]));
    let q_b = full.q_vector[k];
    let q_beta = full.q_vector.rows(0, k).into_owned();
    let q_bb_beta = full.q_matrix.view((0, 0), (k, k)).into_owned();
    let tol = 1e-12 * weight_scale.max(f64::MIN_POSITIVE);
    if q_bb > tol {
        let mut reduced = q_bb_beta - &row * row.transpose() / q_bb;
        symmetrize(&mut reduced);
        let obj = QuadraticObjective {
            q_matrix: reduced,
            q_vector: q_beta - &row * (q_b / q_bb),
            constant: full.constant - q_b * q_b / q_bb,
        };
        return Some((obj, InterceptMap::Affine { q_b, row, q_bb }));
    }
    if q_bb < -tol {
        return None;
    }
    let lin_scale = full.q_vector.amax().max(full.q_matrix.amax()).max(1.0);
    if q_b.abs() > 1e-12 * lin_scale || row.amax() > 1e-12 * lin_scale {
        return None;
    }
    let t_bb = tie_break.q_matrix[(k, k)];
    let t_row: DVector<f64> = DVector::from_iterator(k, (0..k).map(|j| tie_break.q_matrix[(k, j)]));
    let obj = QuadraticObjective { q_matrix: q_bb_beta, q_vector: q_beta, constant: full.constant };
    Some((obj, InterceptMap::Affine { q_b: tie_break.q_vector[k], row: t_row, q_bb: t_bb }))
}

impl SolvableClass for LinearClass {
    fn minimize_combination(&self, xi_orig: f64, xi_switch: f64) -> Result<ClassMinimizer> {
        self.minimize(xi_orig, xi_switch)
    }

    fn losses(&self, params: &[f64]) -> (f64, f64) {
        let v = DVector::from_column_slice(params);
        (self.orig.value(&v), self.switched.value(&v))
    }

    fn estimator(&self) -> SwitchEstimator {
        self.estimator
    }

    /// Squared error with an unpenalized intercept satisfies the independence
    /// condition when the constraint (if any) does not couple X1 and X2
    /// coefficients: zeroing the X1 block then never leaves the feasible set.
    fn independence_condition(&self) -> bool {
        if !self.intercept {
            return false;
        }
        match &self.constraint {
            None => true,
            Some(c) => {
                let cross = c.m.view((0, self.p1), (self.p1, self.p2));
                cross.iter().all(|v| *v == 0.0)
            }
        }
    }

    fn param_dim(&self) -> usize {
        LinearClass::param_dim(self)
    }

    fn original_quadratic(&self) -> QuadraticObjective {
        self.orig.clone()
    }

    fn minimize_quadratic(&self, objective: &QuadraticObjective) -> Result<Vec<f64>> {
        let scale = objective.q_matrix.amax().max(objective.q_vector.amax());
        self.minimize_over_class(objective, scale)
    }

    fn is_feasible(&self, params: &[f64], rel_slack: f64) -> bool {
        match &self.constraint {
            None => true,
            Some(c) => c.contains(&DVector::from_column_slice(&params[..self.slope_dim()]), rel_slack),
        }
    }

    fn prediction_model(&self, params: &[f64]) -> Box<dyn PredictionModel> {
        Box::new(self.model(params))
    }
}
