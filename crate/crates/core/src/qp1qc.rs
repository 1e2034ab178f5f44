//! Global minimization of `b' Q b - 2 q' b + c`, either unconstrained or over
//! one ellipsoid `b' M b <= radius`, for possibly indefinite `Q`.
//!
//! The constrained case is reduced to a ball-constrained trust-region
//! subproblem by whitening with the Cholesky factor of `M` and solved in the
//! eigenbasis of the whitened curvature with a safeguarded Newton iteration
//! on the secular equation.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, sorted_symmetric_eigen, symmetrize};
use crate::linear_class::{EllipsoidConstraint, QuadraticObjective};

/// Default relative tolerance for boundary solutions.
pub const DEFAULT_RTOL: f64 = 1e-9;
/// Iteration cap of the secular-equation solver.
pub const MAX_ITERATIONS: usize = 200;
/// Bottom-eigenspace components of the whitened linear term at or below this
/// fraction of its norm are treated as zero (hard case).
pub const HARD_CASE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    /// Stationary point strictly inside the feasible set (or no constraint).
    Interior,
    /// Minimizer on the boundary with a positive multiplier.
    Boundary,
    /// Boundary minimizer obtained by adding a bottom eigenvector.
    HardCase,
    /// Objective unbounded below; `value` is `-inf`.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub argmin: DVector<f64>,
    pub value: f64,
    /// Lagrange multiplier of the ellipsoid constraint (0 when inactive).
    pub multiplier: f64,
    pub status: QpStatus,
}

impl QpSolution {
    fn unbounded(p: usize) -> Self {
        Self {
            argmin: DVector::zeros(p),
            value: f64::NEG_INFINITY,
            multiplier: 0.0,
            status: QpStatus::Unbounded,
        }
    }
}

/// Eigenvalue magnitude treated as zero, relative to the largest one.
fn zero_eigen_tol(values: &DVector<f64>) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-11 * scale.max(f64::MIN_POSITIVE)
}

/// Unconstrained minimization. Returns the minimum-norm stationary point when
/// `Q` is positive semidefinite and `q` lies in its range, and an
/// [`QpStatus::Unbounded`] solution otherwise.
pub fn solve_unconstrained(obj: &QuadraticObjective) -> QpSolution {
    let p = obj.dim();
    let (values, vectors) = sorted_symmetric_eigen(&obj.q_matrix);
    let tol = zero_eigen_tol(&values);
    if p > 0 && values[0] < -tol {
        return QpSolution::unbounded(p);
    }
    let g = vectors.transpose() * &obj.q_vector;
    let g_norm = g.norm();
    let mut z = DVector::zeros(p);
    for i in 0..p {
        if values[i] > tol {
            z[i] = g[i] / values[i];
        } else if g[i].abs() > 1e-9 * g_norm.max(f64::MIN_POSITIVE) && g[i] != 0.0 {
            return QpSolution::unbounded(p);
        }
    }
    let argmin = &vectors * z;
    let value = obj.value(&argmin);
    QpSolution { argmin, value, multiplier: 0.0, status: QpStatus::Interior }
}

/// Global minimizer over `{b : b' M b <= radius}`.
pub fn solve_qp1qc(obj: &QuadraticObjective, con: &EllipsoidConstraint, rtol: f64) -> Result<QpSolution> {
    let p = obj.dim();
    if con.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "objective has dimension {p}, constraint has {}",
            con.dim()
        )));
    }
    let radius = con.radius;
    let chol = con.m.clone().cholesky().ok_or(Error::SingularConstraint)?;
    let l = chol.l();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::SingularConstraint)?;
    let mut a = &l_inv * &obj.q_matrix * l_inv.transpose();
    symmetrize(&mut a);
    let b = &l_inv * &obj.q_vector;
    let (lambda, v) = sorted_symmetric_eigen(&a);
    let g = v.transpose() * &b;
    let g_norm = g.norm();
    let tol = zero_eigen_tol(&lambda);
    let lambda_min = if p > 0 { lambda[0] } else { 0.0 };

    // Map whitened eigen-coordinates back to the original parameters.
    let to_beta = |z: &DVector<f64>| -> DVector<f64> { l_inv.transpose() * (&v * z) };
    let finish = |beta: DVector<f64>, multiplier: f64, status: QpStatus| -> QpSolution {
        let value = obj.value(&beta);
        QpSolution { argmin: beta, value, multiplier, status }
    };

    // Interior candidate: minimum-norm stationary point of a PSD curvature.
    if lambda_min >= -tol {
        let mut z = DVector::zeros(p);
        let mut in_range = true;
        for i in 0..p {
            if lambda[i] > tol {
                z[i] = g[i] / lambda[i];
            } else if g[i].abs() > HARD_CASE_THRESHOLD * g_norm && g[i] != 0.0 {
                in_range = false;
            }
        }
        if in_range && z.norm_squared() <= radius {
            return Ok(finish(to_beta(&z), 0.0, QpStatus::Interior));
        }
    }

    // Boundary: multiplier mu = mu_low + t with t >= 0.
    let mu_low = (-lambda_min).max(0.0);
    let shifted: Vec<f64> = (0..p).map(|i| (lambda[i] + mu_low).max(0.0)).collect();
    let bottom: Vec<usize> = (0..p).filter(|&i| lambda[i] <= lambda_min + tol).collect();
    let g_bottom = bottom.iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt();
    let hard = lambda_min <= tol && g_bottom <= HARD_CASE_THRESHOLD * g_norm;

    if hard {
        let mut z = DVector::zeros(p);
        for i in 0..p {
            if !bottom.contains(&i) && shifted[i] > 0.0 {
                z[i] = g[i] / shifted[i];
            }
        }
        let zn = z.norm_squared();
        if zn <= radius {
            let tau = (radius - zn).max(0.0).sqrt();
            let mut zp = z.clone();
            let mut zm = z;
            zp[bottom[0]] = tau;
            zm[bottom[0]] = -tau;
            let bp = to_beta(&zp);
            let bm = to_beta(&zm);
            let beta = if lexicographic_cmp(&bp, &bm) == Ordering::Less { bm } else { bp };
            return Ok(finish(beta, mu_low, QpStatus::HardCase));
        }
    }

    let norm_sq = |t: f64| -> f64 {
        (0..p)
            .map(|i| {
                let d = shifted[i] + t;
                if g[i] == 0.0 {
                    0.0
                } else {
                    g[i] * g[i] / (d * d)
                }
            })
            .sum()
    };
    // psi(t) = 1/||z(t)|| - 1/sqrt(radius) is increasing and close to linear.
    let inv_sqrt_r = 1.0 / radius.sqrt();
    let psi = |t: f64| -> (f64, f64) {
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        for i in 0..p {
            if g[i] != 0.0 {
                let d = shifted[i] + t;
                s2 += g[i] * g[i] / (d * d);
                s3 += g[i] * g[i] / (d * d * d);
            }
        }
        let nrm = s2.sqrt();
        (1.0 / nrm - inv_sqrt_r, s3 / (s2 * nrm))
    };
    let mut lo = 0.0f64;
    let mut hi = (g_norm / radius.sqrt()).max(f64::MIN_POSITIVE);
    while norm_sq(hi) > radius {
        hi *= 2.0;
    }
    let mut t = if lambda_min > tol && norm_sq(0.0) > radius { 0.0 } else { hi };
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let ns = norm_sq(t);
        residual = (ns - radius).abs() / radius;
        if residual <= rtol {
            converged = true;
            break;
        }
        if ns > radius {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
        let (f, df) = psi(t);
        let mut next = t - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if next == t || hi - lo <= f64::EPSILON * hi.max(1.0) * 4.0 {
            t = next;
            let ns = norm_sq(t);
            residual = (ns - radius).abs() / radius;
            converged = residual <= rtol.max(1e-12);
            break;
        }
        t = next;
    }
    if !converged {
        return Err(Error::NoConvergence { residual });
    }
    let z = DVector::from_iterator(
        p,
        (0..p).map(|i| if g[i] == 0.0 { 0.0 } else { g[i] / (shifted[i] + t) }),
    );
    Ok(finish(to_beta(&z), mu_low + t, QpStatus::Boundary))
}

/// Order by the first coordinate at which the vectors differ materially.
fn lexicographic_cmp(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    let scale = (a - b).amax();
    for (x, y) in a.iter().zip(b.iter()) {
        if (x - y).abs() > 1e-12 * scale {
            return x.total_cmp(y);
        }
    }
    Ordering::Equal
}

/// Norm of the stationarity residual `(Q + mu M) b - q`.
pub fn kkt_residual(obj: &QuadraticObjective, con: &EllipsoidConstraint, sol: &QpSolution) -> f64 {
    let lhs = &obj.q_matrix * &sol.argmin + sol.multiplier * (&con.m * &sol.argmin);
    (lhs - &obj.q_vector).norm()
}

/// `b' M b` for the constraint matrix.
pub fn constraint_value(con: &EllipsoidConstraint, beta: &DVector<f64>) -> f64 {
    quad_form(&con.m, beta)
}
