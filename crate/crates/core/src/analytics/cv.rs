use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_sd, r_squared};
use crate::boost::{fit_matrix, nll, nll_seconds, FitConfig};
use crate::delivery::CellDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of each row.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle of `0..n`, cut into `k` contiguous blocks whose sizes
/// differ by at most one (the larger blocks come first).
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            assignments[row] = fold;
        }
        pos += size;
    }
    Ok(FoldPlan { k, assignments })
}

/// Held-out scores for one fold. R² is `None` when undefined on the fold
/// (fewer than two rows, or constant targets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub n_test: usize,
    /// Mean NLL of log-seconds under the predicted normal.
    pub nll: f64,
    /// R² between log targets and predicted mu.
    pub r2: Option<f64>,
    /// Mean NLL of seconds under the predicted log-normal.
    pub nll_seconds: f64,
    /// R² between targets and the predicted log-normal mean.
    pub r2_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
    pub per_fold: Vec<FoldScore>,
    pub mean_nll: f64,
    pub sd_nll: f64,
    pub mean_r2: Option<f64>,
    pub sd_r2: Option<f64>,
    pub mean_nll_seconds: f64,
    pub sd_nll_seconds: f64,
    pub mean_r2_seconds: Option<f64>,
    pub sd_r2_seconds: Option<f64>,
}

impl CvReport {
    fn assemble(plan: FoldPlan, seed: u64, per_fold: Vec<FoldScore>) -> Self {
        let stat = |f: fn(&FoldScore) -> Option<f64>| {
            let vals: Vec<f64> = per_fold.iter().filter_map(f).collect();
            mean_sd(&vals)
        };
        let (mean_nll, sd_nll) = stat(|s| Some(s.nll)).unwrap_or((f64::NAN, f64::NAN));
        let (mean_nll_seconds, sd_nll_seconds) =
            stat(|s| Some(s.nll_seconds)).unwrap_or((f64::NAN, f64::NAN));
        let r2 = stat(|s| s.r2);
        let r2s = stat(|s| s.r2_seconds);
        Self {
            k: plan.k,
            seed,
            assignments: plan.assignments,
            mean_nll,
            sd_nll,
            mean_r2: r2.map(|v| v.0),
            sd_r2: r2.map(|v| v.1),
            mean_nll_seconds,
            sd_nll_seconds,
            mean_r2_seconds: r2s.map(|v| v.0),
            sd_r2_seconds: r2s.map(|v| v.1),
            per_fold,
        }
    }
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// K-fold evaluation on a raw design matrix.
pub fn cross_validate_matrix(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    cfg: &FitConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    if x.len() != y.len() {
        return Err(Error::invalid("rows and targets differ in length"));
    }
    let plan = kfold_split(x.len(), k, seed)?;
    let mut per_fold = Vec::with_capacity(k);
    for fold in 0..k {
        let score = (|| {
            let train = plan.train_rows(fold);
            let test = plan.test_rows(fold);
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let (model, _) = fit_matrix(&tx, &ty, feature_names, cfg)?;

            let mut nll_sum = 0.0;
            let mut nll_s_sum = 0.0;
            let (mut z_true, mut mu_pred) = (Vec::new(), Vec::new());
            let (mut y_true, mut y_pred) = (Vec::new(), Vec::new());
            for &i in &test {
                let theta = model.predict(&x[i])?;
                let z = y[i].ln();
                nll_sum += nll(z, theta)?;
                nll_s_sum += nll_seconds(y[i], theta)?;
                z_true.push(z);
                mu_pred.push(theta.mu);
                y_true.push(y[i]);
                y_pred.push(theta.mean_seconds());
            }
            let n = test.len() as f64;
            Ok(FoldScore {
                n_test: test.len(),
                nll: nll_sum / n,
                r2: defined(r_squared(&z_true, &mu_pred))?,
                nll_seconds: nll_s_sum / n,
                r2_seconds: defined(r_squared(&y_true, &y_pred))?,
            })
        })()
        .map_err(|e: Error| Error::Fold { fold, source: Box::new(e) })?;
        per_fold.push(score);
    }
    Ok(CvReport::assemble(plan, seed, per_fold))
}

pub fn cross_validate(data: &CellDataset, cfg: &FitConfig, k: usize, seed: u64) -> Result<CvReport> {
    cross_validate_matrix(&data.matrix(), &data.targets(), &data.feature_names, cfg, k, seed)
}
