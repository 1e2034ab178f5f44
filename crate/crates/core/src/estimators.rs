//! Empirical losses and model reliance.
//!
//! `e_orig` is the ordinary empirical loss. `e_switch` averages the loss over
//! every ordered pair `i != j` after pairing the X1 values of row `i` with
//! the outcome and X2 values of row `j`. `e_divide` uses a single fixed
//! pairing of the first and second halves of the sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// A fitted prediction model evaluated on split covariate rows.
pub trait PredictionModel: Send + Sync {
    fn predict(&self, x1: &[f64], x2: &[f64]) -> f64;
}

impl<T: PredictionModel + ?Sized> PredictionModel for &T {
    fn predict(&self, x1: &[f64], x2: &[f64]) -> f64 {
        (**self).predict(x1, x2)
    }
}

impl<T: PredictionModel + ?Sized> PredictionModel for Box<T> {
    fn predict(&self, x1: &[f64], x2: &[f64]) -> f64 {
        (**self).predict(x1, x2)
    }
}

/// Adapter turning a closure into a [`PredictionModel`].
pub struct FnModel<F>(pub F);

impl<F> PredictionModel for FnModel<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, x1: &[f64], x2: &[f64]) -> f64 {
        (self.0)(x1, x2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(y - f)^2`
    #[default]
    SquaredError,
    /// `max(0, margin - y f)` for labels in {-1, 1}.
    Hinge { margin: f64 },
}

impl LossKind {
    /// Hinge loss with the conventional unit margin.
    pub fn hinge() -> Self {
        LossKind::Hinge { margin: 1.0 }
    }

    #[inline]
    pub fn eval(&self, y: f64, prediction: f64) -> f64 {
        match *self {
            LossKind::SquaredError => {
                let r = y - prediction;
                r * r
            }
            LossKind::Hinge { margin } => (margin - y * prediction).max(0.0),
        }
    }
}

/// How switched and original losses are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelianceMode {
    /// `e_switch / e_orig`
    #[default]
    Ratio,
    /// `e_switch - e_orig`
    Difference,
}

/// Estimator of the switched loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SwitchEstimator {
    /// All ordered pairs `i != j`.
    #[default]
    Switch,
    /// The fixed half-sample pairing.
    Divide,
}

/// Rows below this count are summed on the calling thread.
const PARALLEL_MIN_ROWS: usize = 64;

/// `(1/n) sum_i L(y_i, f(x1_i, x2_i))`.
pub fn e_orig(model: &dyn PredictionModel, loss: LossKind, data: &Dataset) -> f64 {
    let n = data.n();
    let mut total = 0.0;
    for i in 0..n {
        total += loss.eval(data.y()[i], model.predict(data.x1_row(i), data.x2_row(i)));
    }
    total / n as f64
}

/// Sum over `j != i` of `L(y_j, f(x1_i, x2_j))` for a fixed X1 donor row `i`.
fn switched_row_sum(model: &dyn PredictionModel, loss: LossKind, data: &Dataset, i: usize) -> f64 {
    let x1 = data.x1_row(i);
    let mut s = 0.0;
    for j in 0..data.n() {
        if j != i {
            s += loss.eval(data.y()[j], model.predict(x1, data.x2_row(j)));
        }
    }
    s
}

/// `1/(n(n-1)) sum_i sum_{j != i} L(y_j, f(x1_i, x2_j))`.
///
/// Row sums are formed per X1 donor `i` and then added in index order, so the
/// result does not depend on how the rows were scheduled across threads.
pub fn e_switch(model: &dyn PredictionModel, loss: LossKind, data: &Dataset) -> f64 {
    let n = data.n();
    let row_sums: Vec<f64> = if n < PARALLEL_MIN_ROWS {
        (0..n).map(|i| switched_row_sum(model, loss, data, i)).collect()
    } else {
        (0..n).into_par_iter().map(|i| switched_row_sum(model, loss, data, i)).collect()
    };
    let mut total = 0.0;
    for s in row_sums {
        total += s;
    }
    total / (n as f64 * (n as f64 - 1.0))
}

/// Half-sample estimator. With `m = floor(n/2)`, row `i < m` is paired with
/// row `i + m` in both directions; the last row is unused when `n` is odd.
pub fn e_divide(model: &dyn PredictionModel, loss: LossKind, data: &Dataset) -> f64 {
    let m = data.n() / 2;
    let h = |a: usize, b: usize| loss.eval(data.y()[b], model.predict(data.x1_row(a), data.x2_row(b)));
    let mut total = 0.0;
    for i in 0..m {
        total += h(i, i + m) + h(i + m, i);
    }
    total / (2 * m) as f64
}

/// Switched loss computed by enumerating all `n!` permutations of the X1 rows
/// and averaging the loss over positions that are not fixed points.
///
/// Every off-diagonal (donor, recipient) cell is visited `(n-1)!` times; the
/// cell weights are normalized by that count before the cells are added in
/// donor-major order, which reproduces [`e_switch`] exactly.
pub fn e_switch_all_perm_oracle(model: &dyn PredictionModel, loss: LossKind, data: &Dataset) -> Result<f64> {
    let n = data.n();
    if n > 8 {
        return Err(Error::TooLargeForOracle(n));
    }
    let mut value = vec![f64::NAN; n * n];
    let mut count = vec![0u64; n * n];
    let mut visit = |perm: &[usize]| {
        for (recipient, &donor) in perm.iter().enumerate() {
            if donor == recipient {
                continue;
            }
            let l = loss.eval(
                data.y()[recipient],
                model.predict(data.x1_row(donor), data.x2_row(recipient)),
            );
            let cell = donor * n + recipient;
            if count[cell] == 0 {
                value[cell] = l;
            } else {
                debug_assert_eq!(value[cell].to_bits(), l.to_bits());
            }
            count[cell] += 1;
        }
    };
    heap_permutations(n, &mut visit);
    let per_cell: u64 = (1..n as u64).product();
    let mut total = 0.0;
    for donor in 0..n {
        let mut row = 0.0;
        for recipient in 0..n {
            if donor != recipient {
                let cell = donor * n + recipient;
                let weight = count[cell] as f64 / per_cell as f64;
                row += weight * value[cell];
            }
        }
        total += row;
    }
    Ok(total / (n as f64 * (n as f64 - 1.0)))
}

/// Iterative Heap's algorithm over permutations of `0..n`.
fn heap_permutations(n: usize, visit: &mut impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Switched loss under the chosen estimator.
pub fn switched_loss(
    model: &dyn PredictionModel,
    loss: LossKind,
    data: &Dataset,
    estimator: SwitchEstimator,
) -> f64 {
    match estimator {
        SwitchEstimator::Switch => e_switch(model, loss, data),
        SwitchEstimator::Divide => e_divide(model, loss, data),
    }
}

/// Combine switched and original losses into a reliance value.
pub fn reliance_from_losses(e_orig: f64, e_switch: f64, mode: RelianceMode) -> Result<f64> {
    match mode {
        RelianceMode::Ratio => {
            if e_orig == 0.0 {
                Err(Error::ZeroDenominator)
            } else {
                Ok(e_switch / e_orig)
            }
        }
        RelianceMode::Difference => Ok(e_switch - e_orig),
    }
}

/// Empirical model reliance of `model` on X1.
pub fn model_reliance(
    model: &dyn PredictionModel,
    loss: LossKind,
    data: &Dataset,
    mode: RelianceMode,
    estimator: SwitchEstimator,
) -> Result<f64> {
    let eo = e_orig(model, loss, data);
    let es = switched_loss(model, loss, data, estimator);
    reliance_from_losses(eo, es, mode)
}
