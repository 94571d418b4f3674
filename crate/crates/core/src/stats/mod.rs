//! Regression inference: OLS, Holm–Bonferroni, likelihood-ratio tests and
//! Welch t-tests, plus the per-granularity regression table.

pub mod dist;
mod ols;
mod table;

pub use ols::{design, holm_bonferroni, lrt, ols_fit, welch_ttest_greater, LrtResult, RegressionFit, WelchTest};
pub use table::{
    build_regression_table, build_regression_table_for, groups, suite_ttests, Aggregation, CorrectedFit, CorrectedLrt, Granularity, ModelRow,
    ParadigmCell, RegressionRow, RegressionTable, RowStatus, ScoreSum, SuiteTTest,
};
