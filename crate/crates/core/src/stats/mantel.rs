use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::geometry::{condensed_index, DistanceMatrix, RankProfile};
use crate::rng;

/// Absolute comparison slack so that relabelings reproducing the observed
/// correlation up to summation order still count as "at least as extreme".
const TIE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    Greater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MantelResult {
    pub observed: f64,
    /// (1 + #{extreme permutations}) / (B + 1)
    pub p_value: f64,
    pub permutations: usize,
    pub seed: u64,
    pub alternative: Alternative,
}

pub fn mantel_test(a: &DistanceMatrix, b: &DistanceMatrix, permutations: usize, seed: u64) -> Result<MantelResult> {
    mantel_test_with(a, b, permutations, seed, Alternative::TwoSided)
}

/// Spearman-Mantel test. Permutation `p` relabels the points of `b` jointly
/// over rows and columns with a shuffle seeded `seed + p`. Relabeling only
/// permutes condensed entries, so ranks are computed once and re-indexed.
pub fn mantel_test_with(
    a: &DistanceMatrix,
    b: &DistanceMatrix,
    permutations: usize,
    seed: u64,
    alternative: Alternative,
) -> Result<MantelResult> {
    let n = a.n();
    if b.n() != n {
        return Err(PgaError::DimensionMismatch {
            what: "Mantel matrix size",
            expected: n,
            found: b.n(),
        });
    }
    if n < 5 {
        return Err(PgaError::InsufficientData(format!(
            "Mantel test needs n >= 5 points, found {n}"
        )));
    }
    if permutations == 0 {
        return Err(PgaError::invalid("Mantel test needs at least one permutation"));
    }
    let ra = RankProfile::new(a.condensed());
    let rb = RankProfile::new(b.condensed());
    let observed = ra
        .correlation(&rb)
        .ok_or(PgaError::UndefinedCorrelation("Mantel input is constant"))?;
    let extreme = |r: f64| match alternative {
        Alternative::TwoSided => r.abs() >= observed.abs() - TIE_SLACK,
        Alternative::Greater => r >= observed - TIE_SLACK,
    };
    let hits: usize = (0..permutations)
        .into_par_iter()
        .map(|p| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::seeded(seed.wrapping_add(p as u64)));
            let mut index = Vec::with_capacity(a.condensed().len());
            for i in 0..n {
                for j in (i + 1)..n {
                    index.push(condensed_index(n, perm[i], perm[j]));
                }
            }
            let r = ra.correlation_indexed(&rb, &index).expect("non-constant");
            usize::from(extreme(r))
        })
        .sum();
    Ok(MantelResult {
        observed,
        p_value: (1 + hits) as f64 / (permutations + 1) as f64,
        permutations,
        seed,
        alternative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pairwise_cosine_distances;

    fn cloud(seed: u64, n: usize) -> DistanceMatrix {
        let mut r = rng::seeded(seed);
        pairwise_cosine_distances(&rng::gaussian_matrix(&mut r, n, 4)).unwrap()
    }

    #[test]
    fn identical_matrices_hit_the_floor() {
        let a = cloud(1, 30);
        let res = mantel_test(&a, &a, 99, 5).unwrap();
        assert!((res.observed - 1.0).abs() < 1e-12);
        assert!((res.p_value - 0.01).abs() < 1e-12);
    }

    #[test]
    fn reindexing_matches_reranking() {
        let a = cloud(2, 12);
        let b = cloud(3, 12);
        let mut perm: Vec<usize> = (0..12).collect();
        perm.shuffle(&mut rng::seeded(9));
        let direct = crate::geometry::spearman(&a, &b.permuted(&perm)).unwrap();
        let ra = RankProfile::new(a.condensed());
        let rb = RankProfile::new(b.condensed());
        let mut index = Vec::new();
        for i in 0..12 {
            for j in (i + 1)..12 {
                index.push(condensed_index(12, perm[i], perm[j]));
            }
        }
        assert!((ra.correlation_indexed(&rb, &index).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn joint_relabeling_leaves_observed_unchanged() {
        let a = cloud(4, 10);
        let b = cloud(5, 10);
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut rng::seeded(1));
        let before = mantel_test(&a, &b, 9, 0).unwrap().observed;
        let after = mantel_test(&a.permuted(&perm), &b.permuted(&perm), 9, 0).unwrap().observed;
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let a = cloud(1, 4);
        assert!(mantel_test(&a, &a, 9, 0).is_err());
        let c = DistanceMatrix::from_condensed(5, vec![1.0; 10]).unwrap();
        let b = cloud(1, 5);
        assert!(matches!(mantel_test(&c, &b, 9, 0), Err(PgaError::UndefinedCorrelation(_))));
    }
}
