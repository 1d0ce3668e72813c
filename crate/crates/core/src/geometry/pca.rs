use nalgebra::DMatrix;

use super::linalg::{canonicalize_columns, complete_orthonormal, top_eigenpairs};
use super::subspace::Basis;
use crate::error::{PgaError, Result};

pub fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

pub fn center(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Singular values and right singular vectors of `x` (top `m`), computed from
/// whichever Gram matrix is smaller. Right vectors are sign-canonical.
pub(crate) fn top_right_singular(x: &DMatrix<f64>, m: usize) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = x.shape();
    if d <= n {
        let g = x.transpose() * x;
        let (vals, vecs) = top_eigenpairs(&g, m);
        (vals.iter().map(|&v| v.max(0.0).sqrt()).collect(), vecs)
    } else {
        let g = x * x.transpose();
        let (vals, u) = top_eigenpairs(&g, m);
        let sigmas: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
        let lead = sigmas.first().copied().unwrap_or(0.0);
        let xt = x.transpose();
        let mut cols = Vec::new();
        for (j, &s) in sigmas.iter().enumerate() {
            if s <= 1e-12 * lead.max(f64::MIN_POSITIVE) {
                break;
            }
            let v = &xt * u.column(j) / s;
            cols.push(v);
        }
        let partial = if cols.is_empty() {
            DMatrix::zeros(d, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        let mut right = complete_orthonormal(&partial, m);
        canonicalize_columns(&mut right);
        (sigmas, right)
    }
}

/// Top-`m` principal directions of `x_rows` with variances σ²/(n−1).
/// Pass `center_first = false` when the rows are already centered.
pub fn principal_components(
    x_rows: &DMatrix<f64>,
    m: usize,
    center_first: bool,
) -> Result<(Basis, Vec<f64>)> {
    let (n, d) = x_rows.shape();
    if n < 2 {
        return Err(PgaError::InsufficientData(format!(
            "principal components need n >= 2, found {n}"
        )));
    }
    if m == 0 || m > n.min(d) {
        return Err(PgaError::invalid(format!(
            "requested {m} components but min(n, d) = {}",
            n.min(d)
        )));
    }
    let centered;
    let x = if center_first {
        centered = center(x_rows);
        &centered
    } else {
        x_rows
    };
    let (sigmas, right) = top_right_singular(x, m);
    let variances = sigmas.iter().map(|s| s * s / (n as f64 - 1.0)).collect();
    Ok((Basis::from_orthonormal(right), variances))
}

/// Mean-centering followed by removal of the top `ccr_order` principal
/// directions of the centered rows.
pub fn anisotropy_correct(x_rows: &DMatrix<f64>, ccr_order: usize) -> Result<DMatrix<f64>> {
    let (n, d) = x_rows.shape();
    if n < 2 || ccr_order + 1 >= n {
        return Err(PgaError::invalid(format!(
            "CCR order {ccr_order} needs at least {} rows, found {n}",
            ccr_order + 2
        )));
    }
    if ccr_order > d {
        return Err(PgaError::invalid(format!(
            "CCR order {ccr_order} exceeds dimension {d}"
        )));
    }
    let centered = center(x_rows);
    if ccr_order == 0 {
        return Ok(centered);
    }
    let (basis, _) = principal_components(&centered, ccr_order, false)?;
    let v = basis.columns();
    let coords = &centered * v;
    Ok(centered - coords * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::linalg::thin_svd;
    use crate::rng;

    #[test]
    fn line_through_origin() {
        let dir = [1.0 / 3f64.sqrt(); 3];
        let rows: Vec<f64> = (0..20)
            .flat_map(|i| {
                let t = i as f64 - 9.5;
                dir.iter().map(move |c| c * t)
            })
            .collect();
        let x = DMatrix::from_row_slice(20, 3, &rows);
        let (b, var) = principal_components(&x, 3, true).unwrap();
        assert!(var[0] > 0.0);
        assert!(var[1].abs() < 1e-10 && var[2].abs() < 1e-10);
        for (i, c) in dir.iter().enumerate() {
            assert!((b.columns()[(i, 0)] - c).abs() < 1e-9);
        }
    }

    #[test]
    fn two_clusters_on_first_axis() {
        let mut r = rng::seeded(4);
        let mut x = rng::gaussian_matrix(&mut r, 200, 5) * 0.1;
        for i in 0..200 {
            x[(i, 0)] += if i % 2 == 0 { 5.0 } else { -5.0 };
        }
        let (b, _) = principal_components(&x, 1, true).unwrap();
        assert!((b.columns()[(0, 0)].abs() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn isotropic_variances_are_similar() {
        let mut r = rng::seeded(9);
        let x = rng::gaussian_matrix(&mut r, 5000, 10);
        let (_, var) = principal_components(&x, 10, true).unwrap();
        let (lo, hi) = (var[9], var[0]);
        assert!(hi / lo < 1.10 / 0.90, "{var:?}");
        assert!(var.iter().all(|v| (v - 1.0).abs() < 0.10));
    }

    #[test]
    fn wide_matrix_route_matches_svd() {
        let mut r = rng::seeded(12);
        let x = center(&rng::gaussian_matrix(&mut r, 15, 40));
        let (b, var) = principal_components(&x, 4, false).unwrap();
        let s = thin_svd(&x).unwrap();
        for (j, v) in var.iter().enumerate() {
            let want = s.singular_values[j].powi(2) / 14.0;
            assert!((v - want).abs() < 1e-9 * want);
            assert!((b.columns().column(j) - s.right.column(j)).norm() < 1e-8);
        }
    }

    #[test]
    fn components_beyond_rank_rejected() {
        let x = DMatrix::<f64>::zeros(3, 10);
        assert!(principal_components(&x, 4, true).is_err());
    }

    #[test]
    fn centering_only() {
        let mut r = rng::seeded(1);
        let x = rng::gaussian_matrix(&mut r, 30, 6).add_scalar(4.0);
        let y = anisotropy_correct(&x, 0).unwrap();
        assert!(column_means(&y).iter().all(|m| m.abs() <= 1e-9));
    }

    #[test]
    fn removes_dominant_offset_direction() {
        let mut r = rng::seeded(2);
        let mut x = rng::gaussian_matrix(&mut r, 300, 8);
        let g = rng::gaussian_vec(&mut r, 300);
        for i in 0..300 {
            x[(i, 0)] += 50.0 + 20.0 * g[i];
        }
        let y = anisotropy_correct(&x, 1).unwrap();
        // independent oracle: leading right singular vector of the centered input
        let v1 = thin_svd(&center(&x)).unwrap().right.column(0).into_owned();
        let along = &y * &v1;
        let total = y.norm_squared() + 1e-300;
        assert!(along.norm_squared() <= 1e-10 * total);
    }

    #[test]
    fn order_too_large() {
        let x = DMatrix::<f64>::zeros(4, 10);
        assert!(anisotropy_correct(&x, 3).is_err());
    }

    #[test]
    fn sequential_ccr1_equals_ccr2() {
        let mut r = rng::seeded(6);
        let scales = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(6, |i, _| 6.0 - i as f64));
        let x = rng::gaussian_matrix(&mut r, 400, 6) * scales;
        let twice = anisotropy_correct(&anisotropy_correct(&x, 1).unwrap(), 1).unwrap();
        let once = anisotropy_correct(&x, 2).unwrap();
        assert!((twice - &once).norm() / once.norm() <= 1e-6);
        let c0 = anisotropy_correct(&x, 0).unwrap();
        assert!((anisotropy_correct(&c0, 0).unwrap() - &c0).norm() <= 1e-9 * c0.norm());
    }
}
