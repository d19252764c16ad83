//! Cross-validation, regression metrics, and the pooled two-sample t-test.

pub mod cv;
pub mod metrics;
pub mod special;

pub use cv::{cross_validate, cross_validate_matrix, kfold_split, CvReport, FoldPlan, FoldScore};
pub use metrics::{mean_sd, r_squared, t_test_pooled, TTestResult};
pub use special::{beta_inc, ln_gamma, student_t_cdf, student_t_two_sided_p};
