use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::planted::{planted_geometry_in, NoiseSupport, PlantedSpec};
use crate::error::Result;
use crate::geometry::{sample_random_subspace, Basis};
use crate::rng;
use crate::store::{
    write_bundle, write_readout, HiddenStateBundle, ReadoutInterface, ReadoutKind, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "snake_case")]
pub enum LayerPlan {
    /// Signal inside the readout subspace, noise in its complement.
    Aligned { snr: f64 },
    /// Aligned signal under dominant dark directions.
    Masked { snr: f64, strength: f64, rank: usize },
    /// Isotropic noise with a faint aligned component.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    pub model_id: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub vocab: usize,
    pub layers: Vec<LayerPlan>,
    pub seed: u64,
    pub checkpoint_step: Option<u64>,
}

impl SyntheticModelSpec {
    /// Every layer aligned at snr 10.
    pub fn aligned(n: usize, d: usize, k: usize, num_layers: usize, seed: u64) -> Self {
        SyntheticModelSpec {
            model_id: "synthetic-aligned".into(),
            n,
            d,
            k,
            vocab: 2 * d,
            layers: vec![LayerPlan::Aligned { snr: 10.0 }; num_layers + 1],
            seed,
            checkpoint_step: None,
        }
    }

    /// Aligned early layers, a masked band over roughly 60–90% depth and an
    /// aligned final layer.
    pub fn masked_band(n: usize, d: usize, k: usize, num_layers: usize, seed: u64) -> Self {
        let layers = (0..=num_layers)
            .map(|l| {
                let depth = l as f64 / num_layers.max(1) as f64;
                if l == num_layers {
                    LayerPlan::Aligned { snr: 10.0 }
                } else if (0.6..0.95).contains(&depth) {
                    LayerPlan::Masked {
                        snr: 10.0,
                        strength: 20.0,
                        rank: 3,
                    }
                } else {
                    LayerPlan::Aligned { snr: 3.0 }
                }
            })
            .collect();
        SyntheticModelSpec {
            model_id: "synthetic-masked".into(),
            n,
            d,
            k,
            vocab: 2 * d,
            layers,
            seed,
            checkpoint_step: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    pub bundle: HiddenStateBundle,
    pub readout: ReadoutInterface,
    pub basis: Basis,
}

impl SyntheticModel {
    /// Writes `manifest.json` plus layer files and `readout.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        let manifest = write_bundle(&self.bundle, dir)?;
        let readout = write_readout(&self.readout, dir, "readout")?;
        Ok((manifest, readout))
    }
}

/// A vocab × d readout whose top-k right singular vectors span `basis`
/// exactly: singular values fall from 10 to 5 inside the basis and from 1 to
/// 0.1 in the complement. Requires vocab ≥ d.
pub fn planted_readout(basis: &Basis, vocab: usize, seed: u64) -> Result<ReadoutInterface> {
    let (d, k) = (basis.d(), basis.k());
    if vocab < d {
        return Err(crate::error::PgaError::invalid(format!(
            "planted readout needs vocab >= d, found {vocab} < {d}"
        )));
    }
    let mut right = DMatrix::zeros(d, d);
    right.columns_mut(0, k).copy_from(basis.columns());
    if k < d {
        right.columns_mut(k, d - k).copy_from(basis.complement()?.columns());
    }
    let ramp = |i: usize, len: usize, hi: f64, lo: f64| {
        if len <= 1 {
            hi
        } else {
            hi + (lo - hi) * i as f64 / (len - 1) as f64
        }
    };
    let sigma: Vec<f64> = (0..d)
        .map(|i| if i < k { ramp(i, k, 10.0, 5.0) } else { ramp(i - k, d - k, 1.0, 0.1) })
        .collect();
    let mut g = rng::seeded(seed);
    let left = rng::gaussian_matrix(&mut g, vocab, d).qr().q();
    let w = left * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sigma)) * right.transpose();
    ReadoutInterface::from_matrix(ReadoutKind::Unembedding, &w)
}

/// Layer l is planted with seed `seed + 1000 + l`; the readout basis uses `seed`.
pub fn synthetic_model(spec: &SyntheticModelSpec) -> Result<SyntheticModel> {
    let basis = sample_random_subspace(spec.d, spec.k, spec.seed)?;
    let readout = planted_readout(&basis, spec.vocab, spec.seed.wrapping_add(1))?;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (l, plan) in spec.layers.iter().enumerate() {
        let base = PlantedSpec::new(spec.n, spec.d, spec.k, 1.0);
        let ps = match *plan {
            LayerPlan::Aligned { snr } => PlantedSpec { snr, ..base },
            LayerPlan::Masked {
                snr,
                strength,
                rank,
            } => PlantedSpec { snr, ..base }.masked(strength, rank),
            LayerPlan::Noise => PlantedSpec { snr: 0.01, ..base }.with_noise(NoiseSupport::Full),
        };
        let planted = planted_geometry_in(&basis, &ps, spec.seed.wrapping_add(1000 + l as u64))?;
        layers.push(Tensor::from_matrix_f64(&planted.states));
    }
    let token_ids: Vec<i64> = (0..spec.n).map(|i| ((i * 7919) % spec.vocab) as i64).collect();
    let bundle = HiddenStateBundle::new(
        spec.model_id.clone(),
        layers,
        Some(token_ids),
        true,
        spec.checkpoint_step,
    )?;
    Ok(SyntheticModel {
        bundle,
        readout,
        basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::subspace_overlap;
    use crate::pga::ReadoutSpectrum;

    #[test]
    fn planted_readout_spans_basis() {
        let basis = sample_random_subspace(16, 4, 3).unwrap();
        let ro = planted_readout(&basis, 32, 4).unwrap();
        let top = ReadoutSpectrum::from_interface(&ro).top_k(4).unwrap();
        assert!((subspace_overlap(&top, &basis).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn model_shapes() {
        let m = synthetic_model(&SyntheticModelSpec::masked_band(40, 16, 4, 5, 1)).unwrap();
        assert_eq!(m.bundle.layer_count(), 6);
        assert_eq!(m.bundle.d, 16);
        assert_eq!(m.readout.vocab(), 32);
    }
}
