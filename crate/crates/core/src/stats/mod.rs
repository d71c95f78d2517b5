//! Regression over evaluation records and the nonparametric follow-up tests.

mod binning;
mod ols;

use thiserror::Error;

pub use binning::{equal_width_bins, Binning};
pub use ols::{encode_design, ols_fit, Coefficient, DesignMatrix, LabelSupport, RegressionSummary, DESIGN_COLUMNS};
pub use rank_tests::{average_ranks, dunn_posthoc, kruskal_wallis, Adjustment, KruskalWallis, PosthocMatrix};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("{n} observations cannot support {columns} columns")]
    TooFewObservations { n: usize, columns: usize },
    #[error("design matrix is rank deficient; linearly dependent columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("cannot take the log of non-positive {what} = {value}")]
    NonPositiveLog { what: &'static str, value: f64 },
    #[error("no label support registered for dataset `{0}`")]
    UnknownDataset(String),
    #[error("unknown mechanism tag `{0}`")]
    UnknownMechanism(String),
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("all observations are identical")]
    AllTied,
    #[error("need at least one bin")]
    NoBins,
    #[error("cannot bin values: min equals max ({0})")]
    ZeroRange(f64),
    #[error("no values to bin")]
    NoValues,
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;
