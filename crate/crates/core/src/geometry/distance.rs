use nalgebra::DMatrix;

use super::linalg::symmetric_eigenvalues_desc;
use crate::error::{PgaError, Result};

pub const MIN_ROW_NORM: f64 = 1e-12;

/// Upper-triangle (i < j) entries of a symmetric zero-diagonal matrix,
/// row-major: (0,1), (0,2), …, (0,n−1), (1,2), …
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    condensed: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_condensed(n: usize, condensed: Vec<f64>) -> Result<Self> {
        if condensed.len() != n * n.saturating_sub(1) / 2 {
            return Err(PgaError::DimensionMismatch {
                what: "condensed length",
                expected: n * n.saturating_sub(1) / 2,
                found: condensed.len(),
            });
        }
        Ok(DistanceMatrix { n, condensed })
    }

    /// Condensed length for `n` points.
    pub fn len_for(n: usize) -> usize {
        n * n.saturating_sub(1) / 2
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn condensed(&self) -> &[f64] {
        &self.condensed
    }

    /// Position of (i, j), i ≠ j, in the condensed vector.
    pub fn index(&self, i: usize, j: usize) -> usize {
        condensed_index(self.n, i, j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.condensed[self.index(i, j)]
        }
    }

    /// Relabels points: entry (i, j) of the result is entry (π(i), π(j)) here.
    pub fn permuted(&self, perm: &[usize]) -> DistanceMatrix {
        let n = self.n;
        let mut out = Vec::with_capacity(self.condensed.len());
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.get(perm[i], perm[j]));
            }
        }
        DistanceMatrix { n, condensed: out }
    }
}

pub(crate) fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// Rows scaled to unit norm; fails on the first row with norm ≤ 1e-12.
pub fn normalize_rows(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = x.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !(norm > MIN_ROW_NORM) {
            return Err(PgaError::ZeroNormRow { row: i });
        }
        row /= norm;
    }
    Ok(out)
}

/// Cosine distances 1 − cos(x_i, x_j), clamped into [0, 2].
pub fn pairwise_cosine_distances(x_rows: &DMatrix<f64>) -> Result<DistanceMatrix> {
    let unit = normalize_rows(x_rows)?;
    let n = unit.nrows();
    let gram = &unit * unit.transpose();
    let mut condensed = Vec::with_capacity(DistanceMatrix::len_for(n));
    for i in 0..n {
        for j in (i + 1)..n {
            condensed.push((1.0 - gram[(i, j)]).clamp(0.0, 2.0));
        }
    }
    Ok(DistanceMatrix { n, condensed })
}

/// 1 − λ_max / Σλ for the n×n cosine-similarity matrix. Its nonzero spectrum
/// equals that of the d×d Gram of unit rows, so the smaller one is decomposed.
pub fn pairwise_isotropy(x_rows: &DMatrix<f64>) -> Result<f64> {
    let n = x_rows.nrows();
    if n < 2 {
        return Err(PgaError::InsufficientData(
            "isotropy needs at least 2 rows".into(),
        ));
    }
    let unit = normalize_rows(x_rows)?;
    let gram = if unit.ncols() < n {
        unit.transpose() * &unit
    } else {
        &unit * unit.transpose()
    };
    let lambda_max = symmetric_eigenvalues_desc(gram)[0];
    Ok((1.0 - lambda_max / n as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identical_orthogonal_antipodal() {
        let same = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.5, 0.5]);
        assert!(pairwise_cosine_distances(&same)
            .unwrap()
            .condensed()
            .iter()
            .all(|&d| d.abs() < 1e-12));
        let orth = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        assert!((pairwise_cosine_distances(&orth).unwrap().condensed()[0] - 1.0).abs() < 1e-12);
        let anti = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, -2.0]);
        assert!((pairwise_cosine_distances(&anti).unwrap().condensed()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_row_reported() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            pairwise_cosine_distances(&x),
            Err(PgaError::ZeroNormRow { row: 1 })
        ));
    }

    #[test]
    fn condensed_layout() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 1.0, 1.0]);
        let dm = pairwise_cosine_distances(&x).unwrap();
        assert_eq!(dm.condensed().len(), 6);
        assert_eq!(dm.index(0, 1), 0);
        assert_eq!(dm.index(0, 3), 2);
        assert_eq!(dm.index(1, 2), 3);
        assert_eq!(dm.index(3, 2), 5);
        assert!((dm.get(0, 2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_and_scale_invariance() {
        let mut r = rng::seeded(17);
        let x = rng::gaussian_matrix(&mut r, 40, 6);
        let rot = rng::gaussian_matrix(&mut r, 6, 6).qr().q();
        let a = pairwise_cosine_distances(&x).unwrap();
        let b = pairwise_cosine_distances(&(&x * rot)).unwrap();
        let c = pairwise_cosine_distances(&(&x * 3.7)).unwrap();
        for ((p, q), s) in a.condensed().iter().zip(b.condensed()).zip(c.condensed()) {
            assert!((p - q).abs() < 1e-9);
            assert!((p - s).abs() < 1e-12);
        }
    }

    #[test]
    fn isotropy_extremes() {
        let same = DMatrix::from_row_slice(5, 3, &[1.0, 2.0, 3.0].repeat(5));
        assert!(pairwise_isotropy(&same).unwrap().abs() < 1e-9);
        let eye = DMatrix::<f64>::identity(6, 6) * 2.0;
        assert!((pairwise_isotropy(&eye).unwrap() - (1.0 - 1.0 / 6.0)).abs() < 1e-9);
        // wide input goes through the n×n route
        let eye_wide = DMatrix::<f64>::identity(4, 9);
        assert!((pairwise_isotropy(&eye_wide).unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn permuted_relabels_points() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.1]);
        let dm = pairwise_cosine_distances(&x).unwrap();
        let p = dm.permuted(&[2, 0, 1]);
        assert_eq!(p.get(0, 1), dm.get(2, 0));
        assert_eq!(p.get(1, 2), dm.get(0, 1));
    }
}
