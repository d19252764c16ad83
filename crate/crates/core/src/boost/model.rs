use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dist::{natural_gradient, nll_unchecked, DistParams};
use super::tree::{fit_tree_presorted, RegressionTree, SortedColumns, TreeParams};
use crate::delivery::CellDataset;
use crate::error::{Error, Result};

/// Smallest sigma used for the marginal fit when the targets have no spread.
pub const MIN_INIT_SIGMA: f64 = 1e-6;

/// Step-size grid exponent: scalings run 1, 1/2, ..., 2^-LINE_SEARCH_HALVINGS.
pub const LINE_SEARCH_HALVINGS: i32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { n_stages: 500, learning_rate: 0.01, max_depth: 3, min_samples_leaf: 1, seed: 0 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::invalid("max_depth and min_samples_leaf must be positive"));
        }
        Ok(())
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams { max_depth: self.max_depth, min_samples_leaf: self.min_samples_leaf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub scaling: f64,
    pub tree_mu: RegressionTree,
    pub tree_logsigma: RegressionTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub init: DistParams,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub stages: Vec<Stage>,
}

/// Per-stage bookkeeping from a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Total training NLL before any stage, then after each stage.
    pub train_nll: Vec<f64>,
    /// Parameters of every training row after the last stage.
    pub train_params: Vec<DistParams>,
}

fn marginal_fit(z: &[f64]) -> Result<DistParams> {
    if z.len() < 2 {
        return Err(Error::DegenerateSd(format!(
            "cannot fit a spread from {} target(s)",
            z.len()
        )));
    }
    let n = z.len() as f64;
    let mu = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    let log_sigma = (0.5 * var.ln()).max(MIN_INIT_SIGMA.ln());
    Ok(DistParams { mu, log_sigma })
}

fn total_nll(z: &[f64], params: &[DistParams]) -> f64 {
    z.iter().zip(params).map(|(&z, &p)| nll_unchecked(z, p)).sum()
}

#[inline]
fn step(theta: DistParams, step: f64, t_mu: f64, t_ls: f64) -> DistParams {
    DistParams { mu: theta.mu - step * t_mu, log_sigma: theta.log_sigma - step * t_ls }
}

fn validate_inputs(x: &[Vec<f64>], y: &[f64], n_features: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} targets", x.len(), y.len())));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::invalid(format!(
                "row {i} has {} features, expected {n_features}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("row {i} has a non-finite feature")));
        }
    }
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("target {i} must be positive, got {v}")));
    }
    Ok(())
}

/// Natural-gradient boosting of a log-normal model for `y` given `x`.
pub fn fit_matrix(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    cfg: &FitConfig,
) -> Result<(BoostModel, FitTrace)> {
    cfg.validate()?;
    validate_inputs(x, y, feature_names.len())?;
    let z: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let init = marginal_fit(&z)?;
    let n = z.len();
    let sorted = SortedColumns::new(x, feature_names.len());
    let tree_params = cfg.tree_params();

    let mut params = vec![init; n];
    let mut loss = total_nll(&z, &params);
    let mut train_nll = Vec::with_capacity(cfg.n_stages + 1);
    train_nll.push(loss);
    let mut stages = Vec::with_capacity(cfg.n_stages);
    let (mut g_mu, mut g_ls) = (vec![0.0; n], vec![0.0; n]);
    let mut candidate = vec![init; n];

    for _ in 0..cfg.n_stages {
        for i in 0..n {
            (g_mu[i], g_ls[i]) = natural_gradient(z[i], params[i]);
        }
        let tree_mu = fit_tree_presorted(x, &g_mu, &sorted, &tree_params);
        let tree_logsigma = fit_tree_presorted(x, &g_ls, &sorted, &tree_params);
        let t_mu: Vec<f64> = x.iter().map(|r| tree_mu.predict(r)).collect();
        let t_ls: Vec<f64> = x.iter().map(|r| tree_logsigma.predict(r)).collect();

        let mut best: Option<(f64, f64)> = None;
        for k in 0..=LINE_SEARCH_HALVINGS {
            let scaling = 0.5f64.powi(k);
            let s = cfg.learning_rate * scaling;
            for i in 0..n {
                candidate[i] = step(params[i], s, t_mu[i], t_ls[i]);
            }
            let l = total_nll(&z, &candidate);
            if l.is_finite() && best.map_or(true, |(_, b)| l < b) {
                best = Some((scaling, l));
            }
        }
        let scaling = match best {
            Some((scaling, l)) if l < loss => scaling,
            _ => 0.5f64.powi(LINE_SEARCH_HALVINGS),
        };
        let s = cfg.learning_rate * scaling;
        for i in 0..n {
            params[i] = step(params[i], s, t_mu[i], t_ls[i]);
        }
        loss = total_nll(&z, &params);
        train_nll.push(loss);
        stages.push(Stage { scaling, tree_mu, tree_logsigma });
    }

    let model = BoostModel {
        init,
        learning_rate: cfg.learning_rate,
        feature_names: feature_names.to_vec(),
        stages,
    };
    Ok((model, FitTrace { train_nll, train_params: params }))
}

/// Fits on every row of a cell dataset.
pub fn fit(data: &CellDataset, cfg: &FitConfig) -> Result<BoostModel> {
    fit_matrix(&data.matrix(), &data.targets(), &data.feature_names, cfg).map(|(m, _)| m)
}

impl BoostModel {
    pub fn predict(&self, x: &[f64]) -> Result<DistParams> {
        if x.len() != self.feature_names.len() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.feature_names.len(),
                x.len()
            )));
        }
        let mut theta = self.init;
        for stage in &self.stages {
            let s = self.learning_rate * stage.scaling;
            theta = step(theta, s, stage.tree_mu.predict(x), stage.tree_logsigma.predict(x));
        }
        Ok(theta)
    }

    /// Normalized split-gain mass per feature, heaviest first.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut gains: BTreeMap<usize, f64> = BTreeMap::new();
        for stage in &self.stages {
            for tree in [&stage.tree_mu, &stage.tree_logsigma] {
                tree.for_each_split(|f, _, g| *gains.entry(f).or_insert(0.0) += g);
            }
        }
        let total: f64 = gains.values().sum();
        if !(total > 0.0) {
            return Vec::new();
        }
        let mut out: Vec<(String, f64)> = gains
            .into_iter()
            .filter(|(_, g)| *g > 0.0)
            .map(|(f, g)| (self.feature_names[f].clone(), g / total))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: BoostModel = serde_json::from_str(s)?;
        let p = model.feature_names.len();
        for (i, stage) in model.stages.iter().enumerate() {
            if !(stage.scaling > 0.0) {
                return Err(Error::Schema(format!("stage {i} has non-positive scaling")));
            }
            for tree in [&stage.tree_mu, &stage.tree_logsigma] {
                if tree.max_feature().is_some_and(|f| f >= p) {
                    return Err(Error::Schema(format!("stage {i} references a feature beyond {p}")));
                }
            }
        }
        Ok(model)
    }
}

/// Free-function form of [`BoostModel::predict`].
pub fn predict(model: &BoostModel, x: &[f64]) -> Result<DistParams> {
    model.predict(x)
}

pub fn feature_importance(model: &BoostModel) -> Vec<(String, f64)> {
    model.feature_importance()
}
