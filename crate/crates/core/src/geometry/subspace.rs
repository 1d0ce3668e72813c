use nalgebra::DMatrix;

use super::linalg::complete_orthonormal;
use crate::error::{PgaError, Result};
use crate::rng;

/// Orthonormal basis of a k-dimensional subspace of ℝ^d, stored as d×k columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    columns: DMatrix<f64>,
}

pub const ORTHONORMAL_TOL: f64 = 1e-6;

impl Basis {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let (d, k) = columns.shape();
        if k == 0 || k > d {
            return Err(PgaError::invalid(format!(
                "basis must satisfy 1 <= k <= d, found d={d} k={k}"
            )));
        }
        let dev = (columns.transpose() * &columns - DMatrix::identity(k, k)).norm();
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(PgaError::invalid(format!(
                "basis columns are not orthonormal (‖BᵀB − I‖_F = {dev:.3e})"
            )));
        }
        Ok(Basis { columns })
    }

    pub(crate) fn from_orthonormal(columns: DMatrix<f64>) -> Self {
        debug_assert!(Basis::new(columns.clone()).is_ok());
        Basis { columns }
    }

    pub fn d(&self) -> usize {
        self.columns.nrows()
    }

    pub fn k(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Orthonormal basis of the orthogonal complement (d − k columns).
    pub fn complement(&self) -> Result<Basis> {
        if self.k() == self.d() {
            return Err(PgaError::invalid("full-space basis has no complement"));
        }
        let full = complete_orthonormal(&self.columns, self.d());
        Ok(Basis::from_orthonormal(
            full.columns(self.k(), self.d() - self.k()).into_owned(),
        ))
    }
}

/// Haar-uniform random k-subspace of ℝ^d: QR of a d×k standard normal matrix
/// with R's diagonal signs absorbed into Q.
pub fn sample_random_subspace(d: usize, k: usize, seed: u64) -> Result<Basis> {
    if k == 0 || k > d {
        return Err(PgaError::invalid(format!(
            "random subspace needs 1 <= k <= d, found d={d} k={k}"
        )));
    }
    let mut r = rng::seeded(seed);
    let g = rng::gaussian_matrix(&mut r, d, k);
    let qr = g.qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for j in 0..k {
        if rmat[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(Basis::from_orthonormal(q))
}

/// Coordinates of each row in the basis: `x · columns` (n × k).
pub fn project(x_rows: &DMatrix<f64>, basis: &Basis) -> Result<DMatrix<f64>> {
    if x_rows.ncols() != basis.d() {
        return Err(PgaError::DimensionMismatch {
            what: "projection input width",
            expected: basis.d(),
            found: x_rows.ncols(),
        });
    }
    Ok(x_rows * basis.columns())
}

/// Maps coordinates back into ℝ^d: `coords · columnsᵀ`.
pub fn reconstruct(coords: &DMatrix<f64>, basis: &Basis) -> Result<DMatrix<f64>> {
    if coords.ncols() != basis.k() {
        return Err(PgaError::DimensionMismatch {
            what: "coordinate width",
            expected: basis.k(),
            found: coords.ncols(),
        });
    }
    Ok(coords * basis.columns().transpose())
}

/// Mean squared canonical cosine, (1/k)·‖aᵀb‖²_F.
pub fn subspace_overlap(a: &Basis, b: &Basis) -> Result<f64> {
    if a.d() != b.d() {
        return Err(PgaError::DimensionMismatch {
            what: "overlap ambient dimension",
            expected: a.d(),
            found: b.d(),
        });
    }
    if a.k() != b.k() {
        return Err(PgaError::DimensionMismatch {
            what: "overlap subspace dimension",
            expected: a.k(),
            found: b.k(),
        });
    }
    let cross = a.columns().transpose() * b.columns();
    Ok((cross.norm_squared() / a.k() as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn full_dimensional_preserves_norm() {
        let b = sample_random_subspace(4, 4, 7).unwrap();
        let x = DMatrix::from_row_slice(1, 4, &[1.0, -2.0, 0.5, 3.0]);
        let c = project(&x, &b).unwrap();
        assert!((c.norm() - x.norm()).abs() < 1e-6);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sample_random_subspace(256, 16, 99).unwrap();
        let b = sample_random_subspace(256, 16, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_random_subspace(256, 16, 100).unwrap();
        assert_ne!(a, c);
        assert!(Basis::new(a.columns().clone()).is_ok());
    }

    #[test]
    fn k_greater_than_d_rejected() {
        assert!(sample_random_subspace(3, 4, 0).is_err());
    }

    #[test]
    fn projection_energy_expectation() {
        // E‖P_k x‖²/‖x‖² = k/d = 0.10 for d=200, k=20.
        let mut r = rng::seeded(5);
        let x = rng::gaussian_matrix(&mut r, 1, 200);
        let total = x.norm_squared();
        let mean: f64 = (0..1000)
            .map(|s| {
                let b = sample_random_subspace(200, 20, 10_000 + s).unwrap();
                project(&x, &b).unwrap().norm_squared() / total
            })
            .sum::<f64>()
            / 1000.0;
        assert!((mean - 0.10).abs() <= 0.01, "mean {mean}");
    }

    #[test]
    fn basis_column_projects_to_axis() {
        let b = sample_random_subspace(10, 3, 1).unwrap();
        let x = DMatrix::from_row_slice(1, 10, b.columns().column(0).as_slice());
        let c = project(&x, &b).unwrap();
        assert!((c[(0, 0)] - 1.0).abs() < 1e-9);
        assert!(c[(0, 1)].abs() < 1e-9 && c[(0, 2)].abs() < 1e-9);
    }

    #[test]
    fn orthogonal_vector_projects_to_zero() {
        let b = sample_random_subspace(10, 3, 2).unwrap();
        let comp = b.complement().unwrap();
        let x = DMatrix::from_row_slice(1, 10, comp.columns().column(0).as_slice());
        assert!(project(&x, &b).unwrap().norm() < 1e-9);
    }

    #[test]
    fn projection_contracts_and_is_idempotent() {
        let mut r = rng::seeded(8);
        for t in 0..100 {
            let b = sample_random_subspace(30, 7, 500 + t).unwrap();
            let x = rng::gaussian_matrix(&mut r, 1, 30);
            let c = project(&x, &b).unwrap();
            assert!(c.norm() <= x.norm() + 1e-9);
            let again = project(&reconstruct(&c, &b).unwrap(), &b).unwrap();
            assert!((again - c).norm() < 1e-6);
        }
    }

    #[test]
    fn overlap_extremes() {
        let b = sample_random_subspace(12, 6, 3).unwrap();
        assert!((subspace_overlap(&b, &b).unwrap() - 1.0).abs() < 1e-12);
        let comp = b.complement().unwrap();
        assert!(subspace_overlap(&b, &comp).unwrap() < 1e-12);
    }

    #[test]
    fn overlap_of_independent_subspaces() {
        let mean: f64 = (0..20)
            .map(|s| {
                let a = sample_random_subspace(200, 20, 2 * s).unwrap();
                let b = sample_random_subspace(200, 20, 2 * s + 1).unwrap();
                subspace_overlap(&a, &b).unwrap()
            })
            .sum::<f64>()
            / 20.0;
        assert!((mean - 0.10).abs() <= 0.03, "mean {mean}");
    }

    #[test]
    fn non_orthonormal_rejected() {
        let m = DMatrix::from_columns(&[DVector::from_vec(vec![1.0, 1.0, 0.0])]);
        assert!(Basis::new(m).is_err());
    }
}
