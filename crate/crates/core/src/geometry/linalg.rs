use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{PgaError, Result};
use crate::rng;

/// Thin SVD `M = left · diag(σ) · rightᵀ` with σ non-increasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub left: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub right: DMatrix<f64>,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values));
        &self.left * sigma * self.right.transpose()
    }
}

pub fn thin_svd(m: &DMatrix<f64>) -> Result<SvdResult> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(PgaError::invalid("thin_svd needs at least one row and column"));
    }
    if let Some(index) = m.iter().position(|x| !x.is_finite()) {
        return Err(PgaError::NonFinite { index });
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let r = svd.singular_values.len();

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut left = DMatrix::zeros(m.nrows(), r);
    let mut right = DMatrix::zeros(m.ncols(), r);
    let mut singular_values = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        singular_values.push(svd.singular_values[src].max(0.0));
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v_t.row(src).transpose());
    }
    for j in 0..r {
        if canonical_flip(right.column(j).iter()) {
            right.column_mut(j).neg_mut();
            left.column_mut(j).neg_mut();
        }
    }
    Ok(SvdResult {
        left,
        singular_values,
        right,
    })
}

/// True when the largest-magnitude entry (first on ties) is negative.
pub(crate) fn canonical_flip<'a>(values: impl Iterator<Item = &'a f64>) -> bool {
    let mut best = 0.0f64;
    let mut best_abs = -1.0f64;
    for &v in values {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = v;
        }
    }
    best < 0.0
}

pub(crate) fn canonicalize_columns(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        if canonical_flip(m.column(j).iter()) {
            m.column_mut(j).neg_mut();
        }
    }
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue, with
/// sign-canonical eigenvectors in the columns.
pub(crate) fn symmetric_eigen_desc(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = g.nrows();
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[src]);
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonicalize_columns(&mut vecs);
    (vals, vecs)
}

/// Eigenvalues only, descending.
pub(crate) fn symmetric_eigenvalues_desc(g: DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = g.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Top `m` eigenpairs of a symmetric PSD matrix. Small problems and requests
/// for a large share of the spectrum use the dense solver; otherwise block
/// subspace iteration runs until each Ritz pair has residual ≤ 1e-13·λ₁ and
/// falls back to the dense solver if that does not happen.
pub(crate) fn top_eigenpairs(g: &DMatrix<f64>, m: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = g.nrows();
    debug_assert!(m <= n);
    if n <= 256 || 4 * m >= n {
        let (vals, vecs) = symmetric_eigen_desc(g.clone());
        return (vals[..m].to_vec(), vecs.columns(0, m).into_owned());
    }
    if let Some(found) = subspace_iteration(g, m) {
        return found;
    }
    let (vals, vecs) = symmetric_eigen_desc(g.clone());
    (vals[..m].to_vec(), vecs.columns(0, m).into_owned())
}

fn subspace_iteration(g: &DMatrix<f64>, m: usize) -> Option<(Vec<f64>, DMatrix<f64>)> {
    const MAX_ITERS: usize = 500;
    let n = g.nrows();
    let block = (m + 8).min(n);
    let mut rng = rng::seeded(0x5eed_e16e);
    let mut q = rng::gaussian_matrix(&mut rng, n, block).qr().q();
    for _ in 0..MAX_ITERS {
        let z = g * &q;
        q = z.qr().q();
        let small = q.transpose() * g * &q;
        let small = (&small + small.transpose()) * 0.5;
        let (vals, vecs) = symmetric_eigen_desc(small);
        let ritz = &q * &vecs;
        let lead = vals[0].abs().max(f64::MIN_POSITIVE);
        let gr = g * ritz.columns(0, m);
        let converged = (0..m).all(|j| {
            let resid = gr.column(j) - ritz.column(j) * vals[j];
            resid.norm() <= 1e-13 * lead
        });
        if converged {
            let mut top = ritz.columns(0, m).into_owned();
            canonicalize_columns(&mut top);
            return Some((vals[..m].to_vec(), top));
        }
        q = ritz;
    }
    None
}

/// Extends the orthonormal columns of `partial` (d × r) to `target` columns
/// using canonical axis vectors, Gram–Schmidt with reorthogonalization.
pub(crate) fn complete_orthonormal(partial: &DMatrix<f64>, target: usize) -> DMatrix<f64> {
    let d = partial.nrows();
    let mut cols: Vec<DVector<f64>> = partial.column_iter().map(|c| c.into_owned()).collect();
    let mut axis = 0;
    while cols.len() < target && axis < d {
        let mut v = DVector::zeros(d);
        v[axis] = 1.0;
        axis += 1;
        for _ in 0..2 {
            for c in &cols {
                let dot = c.dot(&v);
                v.axpy(-dot, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    DMatrix::from_columns(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_singular_values() {
        let s = thin_svd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.singular_values.len(), 3);
        for v in s.singular_values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_recovers_axes() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let s = thin_svd(&m).unwrap();
        for (got, want) in s.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // canonical sign: largest entry positive, so exactly the axis vectors
        assert!((s.right[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((s.right[(2, 1)] - 1.0).abs() < 1e-12);
        assert!((s.right[(0, 2)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_reconstruction() {
        let mut r = rng::seeded(11);
        let m = rng::gaussian_matrix(&mut r, 50, 20);
        let s = thin_svd(&m).unwrap();
        let resid = (s.reconstruct() - &m).norm() / m.norm();
        assert!(resid <= 1e-6, "residual {resid}");
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let wide = m.transpose();
        let s = thin_svd(&wide).unwrap();
        assert!((s.reconstruct() - &wide).norm() / wide.norm() <= 1e-6);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = DMatrix::identity(2, 2);
        m[(1, 0)] = f64::NAN;
        assert!(thin_svd(&m).is_err());
    }

    #[test]
    fn subspace_iteration_matches_dense() {
        let mut r = rng::seeded(3);
        let x = rng::gaussian_matrix(&mut r, 400, 300);
        let scale = DMatrix::from_fn(300, 300, |i, j| if i == j { 1.0 / (1.0 + i as f64) } else { 0.0 });
        let x = x * scale;
        let g = x.transpose() * &x;
        let (vals, vecs) = top_eigenpairs(&g, 3);
        let (dvals, dvecs) = symmetric_eigen_desc(g.clone());
        for j in 0..3 {
            assert!((vals[j] - dvals[j]).abs() <= 1e-9 * dvals[0]);
            assert!((vecs.column(j) - dvecs.column(j)).norm() < 1e-6);
        }
    }

    #[test]
    fn completion_is_orthonormal() {
        let partial = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let full = complete_orthonormal(&partial, 3);
        let gram = full.transpose() * &full;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
    }
}
