//! Regression, correlation and resampling.

pub mod bootstrap;
pub mod correlation;
pub mod logistic;

pub use bootstrap::bootstrap_ci;
pub use correlation::{mid_ranks, pearson, point_biserial, spearman, Correlation};
pub use logistic::{fit_logistic, Coefficient, RegressionFit, RegressionSpec, RegressionTrial};
