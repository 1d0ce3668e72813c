//! Shape metrics of a layer's state cloud and readout coverage curves.
//!
//! Definitions:
//! - rankme: exp(−Σ pᵢ ln pᵢ), pᵢ = σᵢ / Σσⱼ over singular values of the states
//! - stable rank: Σσᵢ² / σ₁²
//! - participation ratio: (Σλᵢ)² / Σλᵢ² over covariance eigenvalues
//! - α-ReQ: least-squares slope of ln λᵢ against ln i over a rank window
//!   (default 2..=min(n,d)/2). Reported with its sign, so λᵢ ∝ i⁻¹ gives −1.
//! - condition number: σ₁ / σ_r over σᵢ > 1e-10·σ₁
//! - TwoNN: d̂ = n / Σ ln(r₂/r₁) over nearest-neighbour distance ratios

use std::collections::HashSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::geometry::{pairwise_isotropy, spearman_series};
use crate::geometry::symmetric_eigen_desc;
use crate::pga::{PgaResult, ReadoutSpectrum};
use crate::store::ReadoutInterface;

pub const TWONN_MIN_POINTS: usize = 50;
const RETAIN_REL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub layer: usize,
    pub rankme: f64,
    pub stable_rank: f64,
    pub participation_ratio: f64,
    /// `None` when the fit window holds fewer than two positive eigenvalues.
    pub alpha_req: Option<f64>,
    pub condition_number: f64,
    pub isotropy: f64,
    /// `None` when fewer than 50 distinct points are available.
    pub twonn_id: Option<f64>,
}

/// Inclusive 1-based rank window for the α-ReQ fit. `None` for `last` means
/// min(n, d) / 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaWindow {
    pub first: usize,
    pub last: Option<usize>,
}

impl Default for AlphaWindow {
    fn default() -> Self {
        AlphaWindow {
            first: 2,
            last: None,
        }
    }
}

/// Singular values of an n×d matrix, descending. Eigenvectors come from the
/// smaller Gram, then each σᵢ is re-measured as ‖X vᵢ‖ so tiny singular values
/// keep absolute accuracy near ε·σ₁ instead of √ε·σ₁.
pub fn singular_values(x: &DMatrix<f64>) -> Vec<f64> {
    let wide = x.nrows() < x.ncols();
    let gram = if wide { x * x.transpose() } else { x.transpose() * x };
    let (_, vecs) = symmetric_eigen_desc(gram);
    let image = if wide { x.transpose() * &vecs } else { x * &vecs };
    let mut sv: Vec<f64> = image.column_iter().map(|c| c.norm()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn retained(sv: &[f64]) -> &[f64] {
    let Some(&s1) = sv.first() else { return &[] };
    let r = sv.iter().take_while(|&&s| s > RETAIN_REL * s1).count();
    &sv[..r]
}

pub fn rankme(sv: &[f64]) -> f64 {
    let sv = retained(sv);
    let total: f64 = sv.iter().sum();
    let h: f64 = sv
        .iter()
        .map(|s| s / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    h.exp()
}

pub fn stable_rank(sv: &[f64]) -> f64 {
    let sv = retained(sv);
    sv.iter().map(|s| s * s).sum::<f64>() / (sv[0] * sv[0])
}

pub fn participation_ratio(eigenvalues: &[f64]) -> f64 {
    let s: f64 = eigenvalues.iter().sum();
    let s2: f64 = eigenvalues.iter().map(|l| l * l).sum();
    s * s / s2
}

pub fn condition_number(sv: &[f64]) -> f64 {
    let sv = retained(sv);
    sv[0] / sv[sv.len() - 1]
}

/// Log-log slope over ranks `first..=last` (1-based) of a descending spectrum.
pub fn alpha_req(eigenvalues: &[f64], first: usize, last: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = (first.max(1)..=last.min(eigenvalues.len()))
        .filter(|&i| eigenvalues[i - 1] > 0.0)
        .map(|i| ((i as f64).ln(), eigenvalues[i - 1].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn spectral_suite(states: &DMatrix<f64>) -> Result<SpectralReport> {
    spectral_suite_with(states, AlphaWindow::default())
}

pub fn spectral_suite_with(states: &DMatrix<f64>, window: AlphaWindow) -> Result<SpectralReport> {
    let (n, d) = states.shape();
    if n < 3 {
        return Err(PgaError::InsufficientData(format!(
            "spectral metrics need n >= 3, found {n}"
        )));
    }
    let sv = singular_values(states);
    if retained(&sv).is_empty() || sv[0] <= 0.0 {
        return Err(PgaError::invalid("rank-0 input"));
    }
    let eig: Vec<f64> = retained(&sv)
        .iter()
        .map(|s| s * s / (n as f64 - 1.0))
        .collect();
    let last = window.last.unwrap_or(n.min(d) / 2);
    let twonn_id = match twonn_id(states) {
        Ok(est) => Some(est.dimension),
        Err(PgaError::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SpectralReport {
        layer: 0,
        rankme: rankme(&sv),
        stable_rank: stable_rank(&sv),
        participation_ratio: participation_ratio(&eig),
        alpha_req: alpha_req(&eig, window.first, last),
        condition_number: condition_number(&sv),
        isotropy: pairwise_isotropy(states)?,
        twonn_id,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoNnEstimate {
    pub dimension: f64,
    pub n_kept: usize,
    pub duplicates_dropped: usize,
}

fn dedup_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for row in x.row_iter() {
        // +0.0 and −0.0 are the same point
        let v: Vec<f64> = row.iter().map(|&a| if a == 0.0 { 0.0 } else { a }).collect();
        if seen.insert(v.iter().map(|a| a.to_bits()).collect::<Vec<u64>>()) {
            rows.push(v);
        }
    }
    rows
}

/// Two-nearest-neighbour maximum-likelihood intrinsic dimension.
pub fn twonn_id(states: &DMatrix<f64>) -> Result<TwoNnEstimate> {
    let rows = dedup_rows(states);
    let n = rows.len();
    if n < TWONN_MIN_POINTS {
        return Err(PgaError::InsufficientData(format!(
            "TwoNN needs at least {TWONN_MIN_POINTS} distinct points, found {n}"
        )));
    }
    let log_ratios: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut r1, mut r2) = (f64::INFINITY, f64::INFINITY);
            for (j, other) in rows.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d2: f64 = rows[i]
                    .iter()
                    .zip(other)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 < r1 {
                    r2 = r1;
                    r1 = d2;
                } else if d2 < r2 {
                    r2 = d2;
                }
            }
            0.5 * (r2 / r1).ln()
        })
        .collect();
    let total: f64 = log_ratios.iter().sum();
    if !(total > 0.0) {
        return Err(PgaError::invalid(
            "TwoNN undefined: every point is equidistant from its two nearest neighbours",
        ));
    }
    Ok(TwoNnEstimate {
        dimension: n as f64 / total,
        n_kept: n,
        duplicates_dropped: states.nrows() - n,
    })
}

pub fn wu_coverage_curve(interface: &ReadoutInterface) -> Vec<(usize, f64)> {
    ReadoutSpectrum::from_interface(interface).coverage_curve()
}

pub const METRIC_NAMES: [&str; 7] = [
    "rankme",
    "stable_rank",
    "participation_ratio",
    "alpha_req",
    "condition_number",
    "isotropy",
    "twonn_id",
];

impl SpectralReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "rankme" => Some(self.rankme),
            "stable_rank" => Some(self.stable_rank),
            "participation_ratio" => Some(self.participation_ratio),
            "alpha_req" => self.alpha_req,
            "condition_number" => Some(self.condition_number),
            "isotropy" => Some(self.isotropy),
            "twonn_id" => self.twonn_id,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub metric: String,
    /// `None` when either series is constant or fewer than 3 layers have both values.
    pub spearman: Option<f64>,
    pub layers_used: usize,
}

/// Spearman correlation across layers between each metric and the z series.
/// Layers whose z or metric value is undefined are left out of that metric's pair.
pub fn spectral_pga_correlation(
    reports: &[SpectralReport],
    profile: &[PgaResult],
) -> Result<Vec<MetricCorrelation>> {
    let a: Vec<usize> = reports.iter().map(|r| r.layer).collect();
    let b: Vec<usize> = profile.iter().map(|r| r.layer).collect();
    if a != b {
        return Err(PgaError::invalid(
            "spectral reports and PGA profile cover different layers",
        ));
    }
    Ok(METRIC_NAMES
        .iter()
        .map(|&name| {
            let (m, z): (Vec<f64>, Vec<f64>) = reports
                .iter()
                .zip(profile)
                .filter_map(|(r, p)| Some((r.metric(name)?, p.z?)))
                .filter(|(m, z)| m.is_finite() && z.is_finite())
                .unzip();
            let spearman = if m.len() >= 3 {
                spearman_series(&m, &z)
            } else {
                None
            };
            MetricCorrelation {
                metric: name.to_string(),
                spearman,
                layers_used: m.len(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Uniform};

    #[test]
    fn isotropic_spectrum_counts_directions() {
        // rows ±e_i give equal singular values over r = 4 directions
        let mut x = DMatrix::zeros(8, 6);
        for i in 0..4 {
            x[(2 * i, i)] = 1.0;
            x[(2 * i + 1, i)] = -1.0;
        }
        let rep = spectral_suite(&x).unwrap();
        assert!((rep.rankme - 4.0).abs() < 1e-9);
        assert!((rep.stable_rank - 4.0).abs() < 1e-9);
        assert!((rep.participation_ratio - 4.0).abs() < 1e-9);
        assert!((rep.condition_number - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_one() {
        let x = DMatrix::from_fn(10, 5, |i, j| (i as f64 - 4.5) * (j as f64 + 1.0));
        let rep = spectral_suite(&x).unwrap();
        assert!((rep.stable_rank - 1.0).abs() < 1e-9);
        assert!((rep.participation_ratio - 1.0).abs() < 1e-9);
        assert!((rep.rankme - 1.0).abs() < 1e-9);
        assert!((rep.condition_number - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_zero_rejected() {
        assert!(spectral_suite(&DMatrix::zeros(5, 3)).is_err());
    }

    #[test]
    fn inverse_power_law_slope() {
        let eig: Vec<f64> = (1..=200).map(|i| 1.0 / i as f64).collect();
        assert!((alpha_req(&eig, 2, 100).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_invariance_and_inequality_chain() {
        let mut r = rng::seeded(4);
        let x = rng::gaussian_matrix(&mut r, 60, 12)
            * DMatrix::from_diagonal(&nalgebra::DVector::from_fn(12, |i, _| 1.0 / (1.0 + i as f64)));
        let q = rng::gaussian_matrix(&mut r, 12, 12).qr().q();
        let a = spectral_suite(&x).unwrap();
        let b = spectral_suite(&(&x * q)).unwrap();
        assert!((a.rankme - b.rankme).abs() < 1e-9);
        assert!((a.stable_rank - b.stable_rank).abs() < 1e-9);
        assert!((a.participation_ratio - b.participation_ratio).abs() < 1e-9);
        assert!(a.stable_rank <= a.rankme + 1e-12 && a.rankme <= 12.0 + 1e-9);
    }

    #[test]
    fn twonn_square_in_ten_dims() {
        let mut r = rng::seeded(11);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let basis = crate::geometry::sample_random_subspace(10, 2, 5).unwrap();
        let square = DMatrix::from_fn(2000, 2, |_, _| u.sample(&mut r));
        let x = square * basis.columns().transpose();
        let est = twonn_id(&x).unwrap();
        assert!((est.dimension - 2.0).abs() < 0.3, "{}", est.dimension);
    }

    #[test]
    fn twonn_isometry_invariance() {
        let mut r = rng::seeded(12);
        let x = rng::gaussian_matrix(&mut r, 200, 4);
        let q = rng::gaussian_matrix(&mut r, 4, 4).qr().q();
        let mut y = &x * q;
        for mut row in y.row_iter_mut() {
            row.add_scalar_mut(3.0);
        }
        let a = twonn_id(&x).unwrap().dimension;
        let b = twonn_id(&y).unwrap().dimension;
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn twonn_duplicates() {
        let x = DMatrix::from_element(100, 3, 1.0);
        assert!(matches!(twonn_id(&x), Err(PgaError::InsufficientData(_))));
        let mut r = rng::seeded(13);
        let base = rng::gaussian_matrix(&mut r, 60, 3);
        let mut doubled = DMatrix::zeros(120, 3);
        doubled.rows_mut(0, 60).copy_from(&base);
        doubled.rows_mut(60, 60).copy_from(&base);
        let est = twonn_id(&doubled).unwrap();
        assert_eq!(est.duplicates_dropped, 60);
        assert_eq!(est.n_kept, 60);
    }

    #[test]
    fn equal_singular_value_coverage() {
        let m = DMatrix::<f64>::identity(5, 5) * 2.0;
        let ro = ReadoutInterface::from_matrix(crate::store::ReadoutKind::Unembedding, &m).unwrap();
        for (k, f) in wu_coverage_curve(&ro) {
            assert!((f - k as f64 / 5.0).abs() < 1e-12);
        }
    }

    fn rep(layer: usize, v: f64) -> SpectralReport {
        SpectralReport {
            layer,
            rankme: v,
            stable_rank: 1.0,
            participation_ratio: v,
            alpha_req: Some(v),
            condition_number: v,
            isotropy: 0.5,
            twonn_id: None,
        }
    }

    #[test]
    fn metric_correlation_with_z() {
        let zs = [1.0, 3.0, 2.0, 5.0];
        let reports: Vec<_> = zs.iter().enumerate().map(|(l, &z)| rep(l, z)).collect();
        let profile: Vec<_> = zs
            .iter()
            .enumerate()
            .map(|(l, &z)| PgaResult {
                layer: l,
                relative_depth: 0.0,
                rho_readout: 0.0,
                null: crate::pga::NullStats::from_samples(vec![0.0, 1.0], 0),
                z: Some(z),
                k: 1,
                ccr_order: 1,
                readout_kind: crate::pga::BasisKind::ExplicitBasis,
            })
            .collect();
        let out = spectral_pga_correlation(&reports, &profile).unwrap();
        let get = |n: &str| out.iter().find(|m| m.metric == n).unwrap().spearman;
        assert!((get("rankme").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(get("stable_rank"), None);
        assert_eq!(get("twonn_id"), None);
        assert!(spectral_pga_correlation(&reports[..2], &profile).is_err());
    }
}
