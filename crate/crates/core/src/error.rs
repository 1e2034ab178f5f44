//! Error type shared by every module.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Broad category of an [`Error`], used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Invalid arguments or configuration.
    Config,
    /// Problems with the input data.
    Data,
    /// Numerical or search failures.
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column `{column}`: `{value}`")]
    NonNumericCell {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        value: String,
    },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid split: n_train={n_train} must satisfy 0 < n_train < n={n}")]
    InvalidSplitSize { n_train: usize, n: usize },
    #[error("imputation requires at least one X2 column")]
    NoX2Columns,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("all-permutation oracle supports n <= 8, got n={0}")]
    TooLargeForOracle(usize),
    #[error("ratio reliance undefined: original loss is zero")]
    ZeroDenominator,
    #[error("constraint matrix is not symmetric positive definite")]
    SingularConstraint,
    #[error("solver did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("switched-pair expansion needs {entries} entries, budget is {budget}")]
    PairExpansionTooLarge { entries: u128, budget: u128 },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("loss combination is unbounded below over the class (xi_orig={xi_orig}, xi_switch={xi_switch})")]
    UnboundedCombination { xi_orig: f64, xi_switch: f64 },
    #[error("epsilon_abs={eps_abs} is below the minimum empirical loss {min_loss} of the class")]
    InfeasibleEpsilon { eps_abs: f64, min_loss: f64 },
    #[error("every plus-side probe with gamma < 0 was unbounded; constrain the class")]
    AllProbesUnbounded,
    #[error("invalid bound constants: {0}")]
    InvalidConstants(String),
    #[error("{infeasible} of {total} bootstrap replicates were infeasible (limit 20%)")]
    TooManyInfeasibleReplicates { infeasible: usize, total: usize },
    #[error("descriptor cannot be optimized exactly and sampling is disabled")]
    NonOptimizableDescriptor,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Category used to map errors onto CLI exit codes.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            MissingColumn(_) | NonNumericCell { .. } | EmptyFile | Csv(_) | Io(_)
            | InvalidDataset(_) | NoX2Columns | DegenerateData(_) => ErrorCategory::Data,
            InvalidSplitSize { .. } | DimensionMismatch(_) | InvalidConstants(_)
            | InvalidArgument(_) | TooLargeForOracle(_) | PairExpansionTooLarge { .. } => {
                ErrorCategory::Config
            }
            ZeroDenominator | SingularConstraint | NoConvergence { .. }
            | UnboundedCombination { .. } | InfeasibleEpsilon { .. } | AllProbesUnbounded
            | TooManyInfeasibleReplicates { .. } | NonOptimizableDescriptor => {
                ErrorCategory::Solver
            }
        }
    }
}
