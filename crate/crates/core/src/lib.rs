//! Restricted and doubly-shrunken LASSO estimators.
//!
//! The crate fits the unrestricted LASSO, projects it onto a linear
//! hypothesis `H b = h`, and combines the two through a Wald test into
//! preliminary-test, Stein-type and positive-rule shrinkage estimators. It
//! also evaluates their asymptotic risks and runs the Monte Carlo and
//! cross-validation experiments that compare them.

pub mod error;
pub mod eval;
pub mod lasso;
pub mod linalg;
pub mod model;
pub mod par;
pub mod risk;
pub mod shrinkage;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use lasso::{lasso_fit, select_lambda_cv, LambdaSelection, LassoConfig, LassoPath};
pub use model::{
    gram_summary, ols_fit, Centering, CenteringOptions, EstimatorKind, EstimatorResult, FitFlag,
    GramSummary, RegressionData, Restriction,
};
pub use par::ExecMode;
