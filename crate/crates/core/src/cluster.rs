//! Complete-linkage agglomerative clustering of cells under cosine distance.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analytics::{t_test_pooled, TTestResult};
use crate::delivery::{mean, median_sorted};
use crate::error::{Error, Result};
use crate::hexgrid::CellId;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// 1 − cos(u, v). Errors when either vector is all zeros.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!("vector lengths differ: {} vs {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 {
        return Err(Error::UndefinedDistance { index: 0 });
    }
    if nv == 0.0 {
        return Err(Error::UndefinedDistance { index: 1 });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(1.0 - dot / (nu * nv))
}

/// Names of the `top_k` heaviest features. Asking for more features than
/// exist returns all of them.
pub fn select_significant_features(importance: &[(String, f64)], top_k: usize) -> Result<Vec<String>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let mut ranked: Vec<&(String, f64)> = importance.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if top_k > ranked.len() {
        warn!("requested {top_k} significant features but only {} are available", ranked.len());
    }
    Ok(ranked.into_iter().take(top_k).map(|(name, _)| name.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub cells: Vec<CellId>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn label_of(&self, cell: CellId) -> Option<usize> {
        self.cells.iter().position(|&c| c == cell).map(|i| self.labels[i])
    }
}

/// Relabels so clusters are numbered in order of their first member.
fn canonical_labels(owner: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    owner
        .iter()
        .map(|o| {
            let next = map.len();
            *map.entry(*o).or_insert(next)
        })
        .collect()
}

/// Agglomerates `vectors` into `k` clusters. Each merge joins the pair of
/// clusters with the smallest maximum member-to-member cosine distance;
/// ties go to the lexicographically smallest pair of cluster ids, where a
/// cluster's id is its lowest member index. Labels are numbered by first
/// appearance.
pub fn agglomerate(vectors: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if let Some(index) = vectors.iter().position(|v| norm(v) == 0.0) {
        return Err(Error::UndefinedDistance { index });
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = cosine_distance(&vectors[i], &vectors[j])?;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }

    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let row_min = |d: &[f64], active: &[bool], i: usize| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for j in i + 1..n {
            if active[j] && best.map_or(true, |(b, _)| d[i * n + j] < b) {
                best = Some((d[i * n + j], j));
            }
        }
        best
    };
    let mut nearest: Vec<Option<(f64, usize)>> = (0..n).map(|i| row_min(&d, &active, i)).collect();

    for _ in 0..n - k {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            if let Some((v, j)) = nearest[i] {
                if pick.map_or(true, |(b, _, _)| v < b) {
                    pick = Some((v, i, j));
                }
            }
        }
        let (_, i, j) = pick.expect("at least two active clusters remain");
        active[j] = false;
        nearest[j] = None;
        for o in owner.iter_mut().filter(|o| **o == j) {
            *o = i;
        }
        for m in (0..n).filter(|&m| active[m] && m != i) {
            let v = d[i * n + m].max(d[j * n + m]);
            d[i * n + m] = v;
            d[m * n + i] = v;
        }
        nearest[i] = row_min(&d, &active, i);
        for m in (0..j).filter(|&m| active[m] && m != i) {
            if let Some((_, t)) = nearest[m] {
                if t == j || t == i {
                    nearest[m] = row_min(&d, &active, m);
                }
            }
        }
    }
    Ok(canonical_labels(&owner))
}

/// Clusters cells by their vectors; see [`agglomerate`].
pub fn cluster_cells(cells: Vec<CellId>, vectors: &[Vec<f64>], k: usize) -> Result<ClusterAssignment> {
    if cells.len() != vectors.len() {
        return Err(Error::invalid("cells and vectors differ in length"));
    }
    let labels = agglomerate(vectors, k)?;
    Ok(ClusterAssignment { cells, labels, k })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub label: usize,
    pub size: usize,
    pub medoid_cell: CellId,
    pub n_stops: usize,
    pub median_service_time_s: f64,
    pub mean_service_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub per_cluster: Vec<ClusterSummary>,
    /// Pooled t-test on log per-stop service times, cluster 0 vs cluster 1.
    pub test: Option<TTestResult>,
    /// Cells left out of clustering because their feature vector is zero.
    #[serde(default)]
    pub excluded_cells: Vec<CellId>,
}

impl ClusterReport {
    pub fn is_medoid(&self, cell: CellId) -> bool {
        self.per_cluster.iter().any(|c| c.medoid_cell == cell)
    }
}

/// Member with the smallest summed cosine distance to its peers; ties go to
/// the smallest cell id.
pub fn medoid(cells: &[CellId], vectors: &[Vec<f64>], members: &[usize]) -> Result<usize> {
    let mut best: Option<(f64, CellId, usize)> = None;
    for &a in members {
        let mut total = 0.0;
        for &b in members {
            if a != b {
                total += cosine_distance(&vectors[a], &vectors[b])?;
            }
        }
        let better = match best {
            None => true,
            Some((t, c, _)) => total < t || (total == t && cells[a] < c),
        };
        if better {
            best = Some((total, cells[a], a));
        }
    }
    best.map(|(_, _, i)| i).ok_or_else(|| Error::invalid("empty cluster"))
}

/// Per-cluster medoids and pooled per-stop service-time statistics.
pub fn summarize_clusters(
    assignment: &ClusterAssignment,
    per_stop_index: &BTreeMap<CellId, Vec<f64>>,
    vectors: &[Vec<f64>],
) -> Result<ClusterReport> {
    if vectors.len() != assignment.cells.len() {
        return Err(Error::invalid("vectors do not match the assignment"));
    }
    let mut per_cluster = Vec::with_capacity(assignment.k);
    let mut pooled_by_label = Vec::with_capacity(assignment.k);
    for label in 0..assignment.k {
        let members = assignment.members(label);
        if members.is_empty() {
            return Err(Error::invalid(format!("cluster {label} is empty")));
        }
        let m = medoid(&assignment.cells, vectors, &members)?;
        let mut pooled = Vec::new();
        for &i in &members {
            let cell = assignment.cells[i];
            match per_stop_index.get(&cell) {
                Some(times) if !times.is_empty() => pooled.extend_from_slice(times),
                _ => return Err(Error::invalid(format!("cell {cell} has no recorded stops"))),
            }
        }
        pooled.sort_by(f64::total_cmp);
        per_cluster.push(ClusterSummary {
            label,
            size: members.len(),
            medoid_cell: assignment.cells[m],
            n_stops: pooled.len(),
            median_service_time_s: median_sorted(&pooled),
            mean_service_time_s: mean(&pooled),
        });
        pooled_by_label.push(pooled);
    }

    let test = if assignment.k == 2 {
        let a: Vec<f64> = pooled_by_label[0].iter().map(|t| t.ln()).collect();
        let b: Vec<f64> = pooled_by_label[1].iter().map(|t| t.ln()).collect();
        if a.len() < 2 || b.len() < 2 {
            warn!("t-test skipped: a cluster has fewer than two stops");
            None
        } else {
            Some(t_test_pooled(&a, &b)?)
        }
    } else {
        None
    };
    Ok(ClusterReport { k: assignment.k, per_cluster, test, excluded_cells: Vec::new() })
}
