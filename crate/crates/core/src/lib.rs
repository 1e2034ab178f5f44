//! Model reliance (MR) and model class reliance (MCR) estimation.
//!
//! `mcrkit` measures how much a prediction model relies on a block of
//! covariates by comparing its loss on the observed data against its loss
//! when that block is switched between observations. For whole model
//! classes it computes the range of reliance over every well-performing
//! member (the Rashomon set) by probing linear combinations of the two
//! losses, each of which reduces to a quadratic program.
//!
//! Module map:
//!
//! - [`dataset`]: data model, CSV ingestion, splitting, imputation residuals.
//! - [`estimators`]: empirical original/switched/divided losses and MR.
//! - [`linear_class`]: linear classes and their quadratic loss reductions.
//! - [`qp1qc`]: global solver for quadratics under one ellipsoid constraint.
//! - [`rkhs_class`]: RBF kernel regression class with dictionary features.
//! - [`mcr_search`]: γ-probe search for MCR lower and upper bounds.
//! - [`theory_bounds`]: finite-sample bound constants.
//! - [`inference`]: bootstrap MCR intervals and Rashomon-set descriptor intervals.
//! - [`simlab`]: simulation studies and the causal identity checker.
//! - [`cli`]: configuration and command orchestration for the `mcrkit` binary.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linear_class;
mod linalg;
pub mod mcr_search;
pub mod qp1qc;
pub mod rkhs_class;
pub mod simlab;
pub mod theory_bounds;

pub use dataset::{Dataset, SplitSpec};
pub use error::{Error, Result};
pub use estimators::{LossKind, PredictionModel, RelianceMode, SwitchEstimator};
pub use linear_class::{EllipsoidConstraint, LinearClass, LinearModel, QuadraticObjective};
pub use mcr_search::{GammaProbe, McrBoundResult, SearchOptions, Side, SolvableClass};
pub use qp1qc::{QpSolution, QpStatus};
pub use rkhs_class::{KernelSpec, RkhsClass, RkhsModel};
