//! Least-squares regression trees (CART) used as boosting base learners.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack under which two split gains count as tied. Gains of
/// identical partitions reached through different features can differ in
/// the last bits because their prefix sums run in different orders.
const GAIN_TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 3, min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Squared-error reduction achieved by this split.
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf: f64,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn visit_splits(&self, f: &mut impl FnMut(usize, f64, f64)) {
        if let TreeNode::Split { feature, threshold, gain, left, right } = self {
            f(*feature, *threshold, *gain);
            left.visit_splits(f);
            right.visit_splits(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegressionTree {
    root: TreeNode,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self { root: TreeNode::Leaf { leaf: value } }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return *leaf,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Calls `f(feature, threshold, gain)` for every internal node, pre-order.
    pub fn for_each_split(&self, mut f: impl FnMut(usize, f64, f64)) {
        self.root.visit_splits(&mut f);
    }

    /// Largest feature index referenced, if any split exists.
    pub fn max_feature(&self) -> Option<usize> {
        let mut max = None;
        self.for_each_split(|f, _, _| max = max.max(Some(f)));
        max
    }
}

/// Row indices of a design matrix sorted by each feature (ties by row).
#[derive(Debug, Clone)]
pub struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: &[Vec<f64>], n_features: usize) -> Self {
        let order = (0..n_features)
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { order }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    goes_left: Vec<bool>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn build(&mut self, lists: Vec<Vec<u32>>, members: &[u32], depth: usize) -> TreeNode {
        let n = members.len();
        let first = self.y[members[0] as usize];
        if members.iter().all(|&i| self.y[i as usize] == first) {
            return TreeNode::Leaf { leaf: first };
        }
        let sum: f64 = members.iter().map(|&i| self.y[i as usize]).sum();
        let leaf = TreeNode::Leaf { leaf: sum / n as f64 };
        if depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf || lists.is_empty() {
            return leaf;
        }
        let Some(best) = self.best_split(&lists, sum) else {
            return leaf;
        };

        for &i in members {
            self.goes_left[i as usize] = self.x[i as usize][best.feature] <= best.threshold;
        }
        let (mut left_lists, mut right_lists) = (Vec::with_capacity(lists.len()), Vec::with_capacity(lists.len()));
        for list in &lists {
            let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&i| self.goes_left[i as usize]);
            left_lists.push(l);
            right_lists.push(r);
        }
        drop(lists);
        let (left_members, right_members): (Vec<u32>, Vec<u32>) =
            members.iter().partition(|&&i| self.goes_left[i as usize]);
        let left = self.build(left_lists, &left_members, depth + 1);
        let right = self.build(right_lists, &right_members, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            gain: best.gain,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&self, lists: &[Vec<u32>], total: f64) -> Option<BestSplit> {
        let msl = self.params.min_samples_leaf;
        let n = lists[0].len();
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        for (feature, list) in lists.iter().enumerate() {
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let row = list[k] as usize;
                left_sum += self.y[row];
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < msl || n_right < msl {
                    continue;
                }
                let v = self.x[row][feature];
                let next = self.x[list[k + 1] as usize][feature];
                if v == next {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64
                    - parent;
                if !(gain > 0.0) {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain * (1.0 + GAIN_TIE_RTOL),
                };
                if better {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit { feature, threshold, gain });
                }
            }
        }
        best
    }
}

/// Greedy variance-reduction tree on rows `x` with the given targets.
pub fn fit_tree(x: &[Vec<f64>], targets: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    if x.is_empty() || x.len() != targets.len() {
        return Err(Error::invalid(format!(
            "fit_tree needs matching non-empty inputs, got {} rows and {} targets",
            x.len(),
            targets.len()
        )));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ragged design matrix"));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be positive"));
    }
    Ok(fit_tree_presorted(x, targets, &SortedColumns::new(x, p), params))
}

pub(crate) fn fit_tree_presorted(
    x: &[Vec<f64>],
    targets: &[f64],
    sorted: &SortedColumns,
    params: &TreeParams,
) -> RegressionTree {
    let mut builder = Builder { x, y: targets, params: *params, goes_left: vec![false; x.len()] };
    let members: Vec<u32> = (0..x.len() as u32).collect();
    RegressionTree { root: builder.build(sorted.order.clone(), &members, 0) }
}
