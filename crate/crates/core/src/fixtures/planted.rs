use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::geometry::{sample_random_subspace, Basis};
use crate::rng;

/// Where the isotropic noise lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSupport {
    /// Orthogonal complement of the planted basis only.
    #[default]
    Complement,
    /// All of ℝ^d.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Total signal variance over total noise variance.
    pub snr: f64,
    pub mask_strength: f64,
    /// Number of orthonormal dark directions sharing the mask variance budget
    /// equally; each carries mask_strength² / mask_rank per sample.
    pub mask_rank: usize,
    pub noise: NoiseSupport,
}

impl PlantedSpec {
    pub fn new(n: usize, d: usize, k: usize, snr: f64) -> Self {
        PlantedSpec {
            n,
            d,
            k,
            snr,
            mask_strength: 0.0,
            mask_rank: 1,
            noise: NoiseSupport::Complement,
        }
    }

    pub fn masked(mut self, strength: f64, rank: usize) -> Self {
        self.mask_strength = strength;
        self.mask_rank = rank;
        self
    }

    pub fn with_noise(mut self, noise: NoiseSupport) -> Self {
        self.noise = noise;
        self
    }
}

#[derive(Debug, Clone)]
pub struct MaskTerm {
    pub strength: f64,
    /// d × mask_rank orthonormal directions inside the complement.
    pub directions: DMatrix<f64>,
    /// n × mask_rank standard normal coefficients.
    pub coefficients: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct PlantedBundle {
    pub states: DMatrix<f64>,
    pub basis: Basis,
    /// n × k ground-truth coordinates.
    pub latent: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub snr: f64,
    pub mask: Option<MaskTerm>,
}

impl PlantedBundle {
    /// latent·basisᵀ + noise + mask term.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut x = &self.latent * self.basis.columns().transpose() + &self.noise;
        if let Some(m) = &self.mask {
            let scale = m.strength / (m.directions.ncols() as f64).sqrt();
            x += &m.coefficients * m.directions.transpose() * scale;
        }
        x
    }
}

pub fn planted_geometry(
    n: usize,
    d: usize,
    k: usize,
    snr: f64,
    mask_strength: f64,
    seed: u64,
) -> Result<PlantedBundle> {
    planted_geometry_with(&PlantedSpec::new(n, d, k, snr).masked(mask_strength, 1), seed)
}

/// The readout basis is drawn with `seed`; latent, noise and mask use `seed + 1`.
pub fn planted_geometry_with(spec: &PlantedSpec, seed: u64) -> Result<PlantedBundle> {
    if spec.k == 0 || spec.k >= spec.d {
        return Err(PgaError::invalid(format!(
            "planted geometry needs 0 < k < d, found k = {}, d = {}",
            spec.k, spec.d
        )));
    }
    let basis = sample_random_subspace(spec.d, spec.k, seed)?;
    planted_geometry_in(&basis, spec, seed.wrapping_add(1))
}

/// Plants states around a given readout basis.
pub fn planted_geometry_in(basis: &Basis, spec: &PlantedSpec, seed: u64) -> Result<PlantedBundle> {
    let (n, d, k) = (spec.n, basis.d(), basis.k());
    if !(spec.snr > 0.0) || !spec.snr.is_finite() {
        return Err(PgaError::invalid(format!("snr must be positive, found {}", spec.snr)));
    }
    if !(spec.mask_strength >= 0.0) {
        return Err(PgaError::invalid("mask_strength must be non-negative"));
    }
    if k >= d {
        return Err(PgaError::invalid("planted basis must leave a complement"));
    }
    if n < 2 {
        return Err(PgaError::invalid("planted geometry needs at least 2 states"));
    }
    let complement = basis.complement()?;
    let masked = spec.mask_strength > 0.0;
    if masked && (spec.mask_rank == 0 || spec.mask_rank > d - k) {
        return Err(PgaError::invalid(format!(
            "mask_rank must be in 1..={}, found {}",
            d - k,
            spec.mask_rank
        )));
    }
    let mut g = rng::seeded(seed);
    let latent = rng::gaussian_matrix(&mut g, n, k);
    let noise = match spec.noise {
        NoiseSupport::Complement => {
            let sigma = (k as f64 / ((d - k) as f64 * spec.snr)).sqrt();
            rng::gaussian_matrix(&mut g, n, d - k) * complement.columns().transpose() * sigma
        }
        NoiseSupport::Full => {
            let sigma = (k as f64 / (d as f64 * spec.snr)).sqrt();
            rng::gaussian_matrix(&mut g, n, d) * sigma
        }
    };
    let mask = if masked {
        let r = spec.mask_rank;
        // random orthonormal r-frame inside the complement
        let inner = sample_random_subspace(d - k, r, seed.wrapping_add(0x6d61_736b))?;
        let directions = complement.columns() * inner.columns();
        Some(MaskTerm {
            strength: spec.mask_strength,
            directions,
            coefficients: rng::gaussian_matrix(&mut g, n, r),
        })
    } else {
        None
    };
    let mut out = PlantedBundle {
        states: DMatrix::zeros(0, 0),
        basis: basis.clone(),
        latent,
        noise,
        snr: spec.snr,
        mask,
    };
    out.states = out.reconstruct();
    Ok(out)
}

/// Belief vectors (rows) mapped into ℝ^d by a fixed Gaussian embedding plus
/// isotropic noise of standard deviation `noise_std`.
pub fn embed_beliefs(beliefs: &DMatrix<f64>, d: usize, noise_std: f64, seed: u64) -> DMatrix<f64> {
    let mut g = rng::seeded(seed);
    let embed = rng::gaussian_matrix(&mut g, beliefs.ncols(), d);
    let noise = rng::gaussian_matrix(&mut g, beliefs.nrows(), d) * noise_std;
    beliefs * embed + noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;

    #[test]
    fn reconstruction_and_noise_placement() {
        let spec = PlantedSpec::new(60, 20, 5, 4.0).masked(3.0, 2);
        let p = planted_geometry_with(&spec, 7).unwrap();
        assert!((p.reconstruct() - &p.states).norm() < 1e-6);
        assert!(project(&p.noise, &p.basis).unwrap().norm() < 1e-9);
        let m = p.mask.as_ref().unwrap();
        assert!((p.basis.columns().transpose() * &m.directions).norm() < 1e-9);
    }

    #[test]
    fn snr_sets_variance_ratio() {
        let p = planted_geometry(4000, 40, 8, 2.0, 0.0, 3).unwrap();
        let signal = (&p.latent * p.basis.columns().transpose()).norm_squared();
        let ratio = signal / p.noise.norm_squared();
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn invalid_inputs() {
        assert!(planted_geometry(10, 8, 3, 0.0, 0.0, 0).is_err());
        assert!(planted_geometry(10, 8, 8, 1.0, 0.0, 0).is_err());
        assert!(planted_geometry_with(&PlantedSpec::new(10, 8, 3, 1.0).masked(1.0, 6), 0).is_err());
    }

    #[test]
    fn deterministic() {
        let a = planted_geometry(30, 12, 4, 5.0, 2.0, 11).unwrap();
        let b = planted_geometry(30, 12, 4, 5.0, 2.0, 11).unwrap();
        assert_eq!(a.states, b.states);
    }
}
