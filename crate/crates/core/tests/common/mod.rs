//! Test-only reference implementations and fixture helpers.

#![allow(dead_code)]

pub mod geo;
pub mod toy;

use std::collections::BTreeMap;
use std::path::PathBuf;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn golden(name: &str) -> serde_json::Value {
    let path = data_path("golden").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

/// |a − b| ≤ rtol·max(|a|, |b|) + atol.
pub fn close(a: f64, b: f64, rtol: f64, atol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()) + atol
}

// ---------------------------------------------------------------- t tail

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// ∫_a^∞ of the unnormalised t kernel, mapped onto u ∈ [0, 1).
fn kernel_tail(a: f64, df: f64) -> f64 {
    let kernel = move |s: f64| (-(df + 1.0) / 2.0 * (s * s / df).ln_1p()).exp();
    let f = move |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - u;
        kernel(a + u / w) / (w * w)
    };
    // Split so the bulk of the mass is resolved finely.
    let cuts = [0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999, 1.0];
    cuts.windows(2).map(|c| integrate(&f, c[0], c[1], 1e-16)).sum()
}

/// Two-sided Student-t p-value by quadrature of the density, normalised by
/// the quadrature of the half line.
pub fn t_two_sided_quadrature(t: f64, df: f64) -> f64 {
    let tail = kernel_tail(t.abs(), df);
    let half = kernel_tail(0.0, df);
    (tail / half).min(1.0)
}

// ---------------------------------------------------------------- clustering

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    1.0 - dot / (nu * nv)
}

/// Complete linkage by full recomputation of every cluster pair per merge.
/// Ties go to the pair whose lowest members compare smallest.
pub fn naive_complete_linkage(vectors: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..vectors.len()).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut d = f64::NEG_INFINITY;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        d = d.max(cosine(&vectors[i], &vectors[j]));
                    }
                }
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.unwrap();
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort();
    }
    clusters.sort_by_key(|c| c[0]);
    let mut labels = vec![0; vectors.len()];
    for (label, c) in clusters.iter().enumerate() {
        for &i in c {
            labels[i] = label;
        }
    }
    labels
}

// ---------------------------------------------------------------- tallies

/// Counts "key=value" features per cell straight from (point, tags) pairs.
pub fn naive_tally(
    objects: &[(f64, f64, Vec<(String, String)>)],
    resolution: u8,
) -> BTreeMap<String, BTreeMap<String, u64>> {
    let mut out: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (lat, lng, tags) in objects {
        if tags.is_empty() {
            continue;
        }
        let ll = h3o::LatLng::new(*lat, *lng).unwrap();
        let cell = ll.to_cell(h3o::Resolution::try_from(resolution).unwrap()).to_string();
        let bucket = out.entry(cell).or_default();
        for (k, v) in tags {
            *bucket.entry(format!("{k}={v}")).or_default() += 1;
        }
    }
    out
}
