use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::rng;

/// A high-effective-rank Gaussian cloud pushed far from isotropy by a shared
/// offset and one dominant direction, both of which mean-centering plus CCR-1
/// remove.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicSpec {
    pub n: usize,
    pub d: usize,
    /// Smallest over largest per-axis variance of the base cloud (1 = isotropic).
    pub variance_floor: f64,
    /// Norm of the common offset relative to a typical row norm √d.
    pub offset: f64,
    /// Standard deviation along the dominant direction relative to √d.
    pub rogue: f64,
    pub seed: u64,
}

pub fn anisotropic_cloud(spec: &AnisotropicSpec) -> DMatrix<f64> {
    let (n, d) = (spec.n, spec.d);
    let mut g = rng::seeded(spec.seed);
    let mut x = rng::gaussian_matrix(&mut g, n, d);
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let t = if d > 1 { j as f64 / (d - 1) as f64 } else { 0.0 };
        col *= (1.0 + t * (spec.variance_floor - 1.0)).sqrt();
    }
    let scale = (d as f64).sqrt();
    let unit = |v: Vec<f64>| {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / norm).collect::<Vec<f64>>()
    };
    let offset = unit(rng::gaussian_vec(&mut g, d));
    let rogue_dir = unit(rng::gaussian_vec(&mut g, d));
    let coeffs = rng::gaussian_vec(&mut g, n);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] += scale * (spec.offset * offset[j] + spec.rogue * coeffs[i] * rogue_dir[j]);
        }
    }
    x
}

/// The anisotropic fixtures shipped with the crate.
pub fn shipped_anisotropic_fixtures() -> Vec<AnisotropicSpec> {
    [(500, 512, 31), (800, 768, 32), (1000, 1024, 33), (600, 2048, 34)]
        .into_iter()
        .map(|(n, d, seed)| AnisotropicSpec {
            n,
            d,
            variance_floor: 0.5,
            offset: 3.0,
            rogue: 2.0,
            seed,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pairwise_isotropy;

    #[test]
    fn strongly_anisotropic_before_correction() {
        let spec = AnisotropicSpec {
            n: 200,
            d: 64,
            variance_floor: 0.5,
            offset: 3.0,
            rogue: 2.0,
            seed: 1,
        };
        let x = anisotropic_cloud(&spec);
        assert!(pairwise_isotropy(&x).unwrap() < 0.5);
        assert_eq!(x, anisotropic_cloud(&spec));
    }
}
