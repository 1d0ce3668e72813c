use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::geometry::Basis;
use crate::pga::{layer_pga, BasisKind, PgaConfig};
use crate::rng;

pub const MIN_SUBSAMPLE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub size: usize,
    pub mean_z: f64,
    /// Sample standard deviation across repeats (0 for a single repeat).
    pub std_z: f64,
    pub repeats: usize,
    pub z_values: Vec<f64>,
}

/// z at several sample sizes. Repeat `r` of size index `s` subsamples without
/// replacement using seed `seed + s·repeats + r`; chosen rows keep their
/// original order, so size = n reproduces the full sample exactly.
pub fn stability_sweep(
    states: &DMatrix<f64>,
    basis: &Basis,
    sizes: &[usize],
    repeats: usize,
    config: &PgaConfig,
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    let n = states.nrows();
    if repeats == 0 {
        return Err(PgaError::invalid("stability sweep needs at least one repeat"));
    }
    for &s in sizes {
        if s < MIN_SUBSAMPLE {
            return Err(PgaError::invalid(format!(
                "subsample size {s} below minimum {MIN_SUBSAMPLE}"
            )));
        }
        if s > n {
            return Err(PgaError::invalid(format!(
                "subsample size {s} exceeds the {n} available states"
            )));
        }
    }
    sizes
        .iter()
        .enumerate()
        .map(|(si, &size)| {
            let zs: Vec<Result<f64>> = (0..repeats)
                .into_par_iter()
                .map(|r| {
                    let s = seed.wrapping_add((si * repeats + r) as u64);
                    let mut idx = index::sample(&mut rng::seeded(s), n, size).into_vec();
                    idx.sort_unstable();
                    layer_pga(&states.select_rows(&idx), basis, config, BasisKind::ExplicitBasis)?
                        .z
                        .ok_or(PgaError::UndefinedCorrelation("subsample has zero null spread"))
                })
                .collect();
            let z_values = zs.into_iter().collect::<Result<Vec<f64>>>()?;
            let m = z_values.len() as f64;
            let mean_z = z_values.iter().sum::<f64>() / m;
            let std_z = if z_values.len() > 1 {
                (z_values.iter().map(|z| (z - mean_z).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(StabilityRow {
                size,
                mean_z,
                std_z,
                repeats,
                z_values,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_has_zero_spread() {
        let mut r = rng::seeded(1);
        let x = rng::gaussian_matrix(&mut r, 30, 10);
        let basis = crate::geometry::sample_random_subspace(10, 3, 99).unwrap();
        let cfg = PgaConfig {
            k: 3,
            null_draws: 6,
            ccr_order: 1,
            base_seed: 0,
        };
        let rows = stability_sweep(&x, &basis, &[30], 3, &cfg, 4).unwrap();
        assert_eq!(rows[0].std_z, 0.0);
        assert!(stability_sweep(&x, &basis, &[10], 3, &cfg, 4).is_err());
        assert!(stability_sweep(&x, &basis, &[31], 3, &cfg, 4).is_err());
    }
}
