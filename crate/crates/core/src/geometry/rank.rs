//! Average ranks and Spearman correlation.

use super::distance::DistanceMatrix;
use crate::error::{PgaError, Result};

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let sorted = sorted_pairs(values);
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sorted[end].0 == sorted[start].0 {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &(_, idx) in &sorted[start..end] {
            ranks[idx as usize] = avg;
        }
        start = end;
    }
    ranks
}

/// (value, index) pairs in ascending `total_cmp` order. Finite inputs go
/// through linear buckets over [min, max]; a bucket index is monotone in the
/// value, so ordering each bucket orders the whole. Two levels keep the
/// scatter cache-resident: 256 coarse buckets, then each one refined alone.
fn sorted_pairs(values: &[f64]) -> Vec<(f64, u32)> {
    let n = values.len();
    assert!(n <= u32::MAX as usize, "too many values to rank");
    let mut pairs: Vec<(f64, u32)> = values.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect();
    let (min, max) = value_range(&pairs);
    if n < 64 || !min.is_finite() || !max.is_finite() || values.iter().any(|v| v.is_nan()) {
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        return pairs;
    }
    let mut out = vec![(0.0, 0u32); n];
    let Some(offsets) = bucket_pass(&pairs, &mut out, min, max, 256) else {
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        return pairs;
    };
    for w in offsets.windows(2) {
        let (src, tmp) = (&mut out[w[0]..w[1]], &mut pairs[w[0]..w[1]]);
        refine(src, tmp);
    }
    out
}

fn value_range(a: &[(f64, u32)]) -> (f64, f64) {
    a.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)))
}

/// Scatters `src` into `dst` by linear bucket; returns bucket boundaries, or
/// `None` when the range cannot be scaled.
fn bucket_pass(
    src: &[(f64, u32)],
    dst: &mut [(f64, u32)],
    min: f64,
    max: f64,
    buckets: usize,
) -> Option<Vec<usize>> {
    let scale = buckets as f64 / (max - min);
    if !scale.is_finite() {
        return None;
    }
    let bucket = |v: f64| (((v - min) * scale) as usize).min(buckets - 1);
    let mut offsets = vec![0usize; buckets + 1];
    for p in src {
        offsets[bucket(p.0) + 1] += 1;
    }
    for b in 0..buckets {
        offsets[b + 1] += offsets[b];
    }
    let mut next = offsets.clone();
    for &p in src {
        let b = bucket(p.0);
        dst[next[b]] = p;
        next[b] += 1;
    }
    Some(offsets)
}

/// Orders one coarse bucket in place, using `tmp` (same length) as scratch.
fn refine(a: &mut [(f64, u32)], tmp: &mut [(f64, u32)]) {
    if a.len() <= 16 {
        insertion_sort(a);
        return;
    }
    let (min, max) = value_range(a);
    if min == max {
        return;
    }
    match bucket_pass(a, tmp, min, max, a.len()) {
        Some(offsets) => {
            for w in offsets.windows(2) {
                let b = &mut tmp[w[0]..w[1]];
                if b.len() <= 16 {
                    insertion_sort(b);
                } else {
                    b.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
                }
            }
            a.copy_from_slice(tmp);
        }
        None => a.sort_unstable_by(|x, y| x.0.total_cmp(&y.0)),
    }
}

fn insertion_sort(a: &mut [(f64, u32)]) {
    for i in 1..a.len() {
        let mut j = i;
        while j > 0 && a[j - 1].0.total_cmp(&a[j].0).is_gt() {
            a.swap(j - 1, j);
            j -= 1;
        }
    }
}

/// Mean-centered ranks of one vector, reusable across many correlations.
#[derive(Debug, Clone)]
pub struct RankProfile {
    centered: Vec<f64>,
    sum_sq: f64,
}

impl RankProfile {
    pub fn new(values: &[f64]) -> Self {
        let ranks = average_ranks(values);
        Self::from_ranks(ranks)
    }

    fn from_ranks(ranks: Vec<f64>) -> Self {
        let n = ranks.len();
        // mean of average ranks is exactly (n + 1) / 2
        let mean = (n as f64 + 1.0) / 2.0;
        let centered: Vec<f64> = ranks.into_iter().map(|r| r - mean).collect();
        let sum_sq = centered.iter().map(|c| c * c).sum();
        RankProfile { centered, sum_sq }
    }

    pub fn len(&self) -> usize {
        self.centered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centered.is_empty()
    }

    /// True when every value was tied (zero rank variance).
    pub fn is_constant(&self) -> bool {
        self.sum_sq <= 0.0
    }

    pub fn centered(&self) -> &[f64] {
        &self.centered
    }

    /// Pearson correlation of the two rank vectors; `None` if either is constant.
    pub fn correlation(&self, other: &RankProfile) -> Option<f64> {
        assert_eq!(self.len(), other.len(), "rank profiles differ in length");
        if self.is_constant() || other.is_constant() {
            return None;
        }
        let cross: f64 = self
            .centered
            .iter()
            .zip(&other.centered)
            .map(|(a, b)| a * b)
            .sum();
        Some((cross / (self.sum_sq * other.sum_sq).sqrt()).clamp(-1.0, 1.0))
    }

    /// Spearman correlation against raw `values`, ranked on the fly without
    /// materializing their rank vector. `None` if either side is constant.
    pub fn correlation_with_values(&self, values: &[f64]) -> Option<f64> {
        assert_eq!(self.len(), values.len(), "rank profile and values differ in length");
        if self.is_constant() {
            return None;
        }
        let n = values.len();
        let mean = (n as f64 + 1.0) / 2.0;
        let sorted = sorted_pairs(values);
        let (mut cross, mut sum_sq) = (0.0, 0.0);
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && sorted[end].0 == sorted[start].0 {
                end += 1;
            }
            let c = (start + 1 + end) as f64 / 2.0 - mean;
            let tied: f64 = sorted[start..end].iter().map(|&(_, i)| self.centered[i as usize]).sum();
            cross += c * tied;
            sum_sq += c * c * (end - start) as f64;
            start = end;
        }
        if sum_sq <= 0.0 {
            return None;
        }
        Some((cross / (self.sum_sq * sum_sq).sqrt()).clamp(-1.0, 1.0))
    }

    /// Correlation against `other` with its entries read through `index`,
    /// i.e. Σ self[t]·other[index[t]]. Used for label permutations, which
    /// permute entries without changing the rank multiset.
    pub fn correlation_indexed(&self, other: &RankProfile, index: &[usize]) -> Option<f64> {
        if self.is_constant() || other.is_constant() {
            return None;
        }
        let cross: f64 = self
            .centered
            .iter()
            .zip(index)
            .map(|(a, &t)| a * other.centered[t])
            .sum();
        Some((cross / (self.sum_sq * other.sum_sq).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Spearman rank correlation of two equal-length series; `None` when either
/// series has zero rank variance.
pub fn spearman_series(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "series differ in length");
    RankProfile::new(a).correlation(&RankProfile::new(b))
}

/// Spearman correlation between the condensed entries of two distance
/// matrices. Constant inputs yield `UndefinedCorrelation`.
pub fn spearman(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(PgaError::DimensionMismatch {
            what: "distance matrix size",
            expected: a.n(),
            found: b.n(),
        });
    }
    if a.n() < 4 {
        return Err(PgaError::InsufficientData(format!(
            "spearman needs n >= 4 points, found {}",
            a.n()
        )));
    }
    let ra = RankProfile::new(a.condensed());
    let rb = RankProfile::new(b.condensed());
    if ra.is_constant() {
        return Err(PgaError::UndefinedCorrelation("first input"));
    }
    if rb.is_constant() {
        return Err(PgaError::UndefinedCorrelation("second input"));
    }
    Ok(ra.correlation(&rb).expect("checked non-constant"))
}

/// Plain Pearson correlation; `None` for zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
