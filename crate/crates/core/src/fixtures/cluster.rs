use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::geometry::pearson;
use crate::rng::{self, SeededRng};

const RESTARTS: usize = 10;
const MAX_ITER: usize = 100;
const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    /// n_clusters × m.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
}

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(c.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn plus_plus_init(x: &DMatrix<f64>, k: usize, g: &mut SeededRng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut centroids = DMatrix::zeros(k, x.ncols());
    let first = g.random_range(0..n);
    centroids.row_mut(0).copy_from(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = g.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&w| {
                    acc += w;
                    u < acc
                })
                .unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1))
        } else {
            g.random_range(0..n)
        };
        centroids.row_mut(c).copy_from(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x, i, &centroids, c));
        }
    }
    centroids
}

fn lloyd(x: &DMatrix<f64>, mut centroids: DMatrix<f64>) -> KMeansFit {
    let (n, m) = x.shape();
    let k = centroids.nrows();
    let mut assignments = vec![0; n];
    for _ in 0..MAX_ITER {
        for (i, a) in assignments.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(x, i, &centroids, c);
                if d < best.0 {
                    best = (d, c);
                }
            }
            *a = best.1;
        }
        let mut sums = DMatrix::zeros(k, m);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += x.row(i);
            counts[a] += 1;
        }
        let mut updated = centroids.clone();
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                updated.row_mut(c).copy_from(&(sums.row(c) / count as f64));
            }
        }
        let shift = (&updated - &centroids).norm_squared();
        centroids = updated;
        if shift <= TOL {
            break;
        }
    }
    let mut inertia = 0.0;
    for (i, a) in assignments.iter_mut().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let d = sq_dist(x, i, &centroids, c);
            if d < best.0 {
                best = (d, c);
            }
        }
        *a = best.1;
        inertia += best.0;
    }
    KMeansFit {
        assignments,
        centroids,
        inertia,
    }
}

/// k-means++ seeding then Lloyd iterations (≤ 100, stop when the squared
/// centroid shift is ≤ 1e-6), best inertia of 10 restarts seeded `seed + r`.
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    if k < 1 || x.nrows() < k {
        return Err(PgaError::invalid(format!(
            "k-means needs 1 <= k <= n, found k = {k}, n = {}",
            x.nrows()
        )));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..RESTARTS {
        let mut g = rng::seeded(seed.wrapping_add(r as u64));
        let fit = lloyd(x, plus_plus_init(x, k, &mut g));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sa: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sb: f64 = cols.values().map(|&c| comb2(c)).sum();
    let expected = sa * sb / comb2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        // both labelings trivial (all singletons or one block)
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEval {
    pub ari: f64,
    /// Pearson correlation between flattened features and their assigned
    /// centroids; `None` when either side has zero variance.
    pub centroid_corr: Option<f64>,
    pub inertia: f64,
    /// Clusters that ended with exactly one member.
    pub singleton_clusters: usize,
}

pub fn cluster_eval(
    labels: &[usize],
    features: &DMatrix<f64>,
    n_clusters: usize,
    seed: u64,
) -> Result<ClusterEval> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(PgaError::DimensionMismatch {
            what: "label count",
            expected: n,
            found: labels.len(),
        });
    }
    if n_clusters < 2 || n < n_clusters {
        return Err(PgaError::invalid(format!(
            "cluster_eval needs n >= n_clusters >= 2, found n = {n}, n_clusters = {n_clusters}"
        )));
    }
    let fit = kmeans(features, n_clusters, seed)?;
    let mut sizes = vec![0usize; n_clusters];
    for &a in &fit.assignments {
        sizes[a] += 1;
    }
    let mut flat_x = Vec::with_capacity(features.len());
    let mut flat_c = Vec::with_capacity(features.len());
    for (i, &a) in fit.assignments.iter().enumerate() {
        flat_x.extend(features.row(i).iter());
        flat_c.extend(fit.centroids.row(a).iter());
    }
    Ok(ClusterEval {
        ari: adjusted_rand_index(labels, &fit.assignments),
        centroid_corr: pearson(&flat_x, &flat_c),
        inertia: fit.inertia,
        singleton_clusters: sizes.iter().filter(|&&s| s == 1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_basics() {
        let a = [0, 0, 1, 1, 2, 2];
        assert_eq!(adjusted_rand_index(&a, &a), 1.0);
        assert_eq!(adjusted_rand_index(&a, &[5, 5, 3, 3, 9, 9]), 1.0);
        // hand value: contingency [[1,1],[1,1]] → index 0, expected 2·2/6
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!((v - (0.0 - 2.0 / 3.0) / (2.0 - 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn one_hot_features_recovered() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let x = DMatrix::from_fn(60, 3, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
        let e = cluster_eval(&labels, &x, 3, 0).unwrap();
        assert_eq!(e.ari, 1.0);
        assert!((e.centroid_corr.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(e.singleton_clusters, 0);
    }

    #[test]
    fn noise_features_near_chance() {
        let labels: Vec<usize> = (0..600).map(|i| i % 3).collect();
        let mut g = rng::seeded(5);
        let x = rng::gaussian_matrix(&mut g, 600, 4);
        let e = cluster_eval(&labels, &x, 3, 1).unwrap();
        assert!(e.ari.abs() < 0.05, "{}", e.ari);
    }

    #[test]
    fn validation() {
        let x = DMatrix::zeros(3, 2);
        assert!(cluster_eval(&[0, 1, 2], &x, 4, 0).is_err());
        assert!(cluster_eval(&[0, 1], &x, 2, 0).is_err());
    }
}
