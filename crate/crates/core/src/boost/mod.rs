//! Natural-gradient boosting of a log-normal service-time distribution.
//!
//! Each stage fits one regression tree per distribution parameter to the
//! Fisher-preconditioned NLL gradients, picks a shared step scaling by a
//! halving line search on training NLL, and moves every row's parameters
//! along the tree outputs.

pub mod dist;
pub mod model;
pub mod tree;

pub use dist::{fisher_diagonal, gradient, natural_gradient, nll, nll_seconds, DistParams};
pub use model::{feature_importance, fit, fit_matrix, predict, BoostModel, FitConfig, FitTrace, Stage};
pub use tree::{fit_tree, RegressionTree, TreeNode, TreeParams};
