use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::geometry::Basis;
use crate::pga::{layer_pga, BasisKind, PgaConfig};
use crate::rng;

/// Consecutive degenerate resamples tolerated within one replicate.
pub const MAX_REDRAWS: usize = 100;
const MIN_DISTINCT_ROWS: usize = 3;
const MIN_ROWS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub b_boot: usize,
    pub seed: u64,
    /// Replicate z values in replicate order.
    pub replicates: Vec<f64>,
    /// Resamples discarded for having fewer than 3 distinct rows.
    pub redraws: usize,
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of unsorted samples.
pub fn percentile_type7(samples: &[f64], q: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

fn defined_z(states: &DMatrix<f64>, basis: &Basis, config: &PgaConfig) -> Result<f64> {
    layer_pga(states, basis, config, BasisKind::ExplicitBasis)?
        .z
        .ok_or(PgaError::UndefinedCorrelation("bootstrap replicate has zero null spread"))
}

/// Percentile (2.5, 97.5) interval for z. Replicate `r` resamples the raw rows
/// with replacement using seed `boot_seed + r`, then corrects and scores with
/// the same null seeds as the point estimate.
pub fn bootstrap_pga(
    states: &DMatrix<f64>,
    basis: &Basis,
    config: &PgaConfig,
    b_boot: usize,
    boot_seed: u64,
) -> Result<BootstrapCI> {
    let n = states.nrows();
    if n < MIN_ROWS {
        return Err(PgaError::InsufficientData(format!(
            "bootstrap needs n >= {MIN_ROWS}, found {n}"
        )));
    }
    if b_boot == 0 {
        return Err(PgaError::invalid("bootstrap needs at least one resample"));
    }
    let point = defined_z(states, basis, config)?;
    let reps: Vec<Result<(f64, usize)>> = (0..b_boot)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::seeded(boot_seed.wrapping_add(r as u64));
            let mut redraws = 0;
            loop {
                let idx: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
                if idx.iter().collect::<BTreeSet<_>>().len() >= MIN_DISTINCT_ROWS {
                    let z = defined_z(&states.select_rows(&idx), basis, config)?;
                    return Ok((z, redraws));
                }
                redraws += 1;
                if redraws >= MAX_REDRAWS {
                    return Err(PgaError::InsufficientData(format!(
                        "bootstrap replicate {r} stayed degenerate after {MAX_REDRAWS} redraws"
                    )));
                }
            }
        })
        .collect();
    let mut replicates = Vec::with_capacity(b_boot);
    let mut redraws = 0;
    for rep in reps {
        let (z, rd) = rep?;
        replicates.push(z);
        redraws += rd;
    }
    Ok(BootstrapCI {
        point,
        lo: percentile_type7(&replicates, 0.025),
        hi: percentile_type7(&replicates, 0.975),
        b_boot,
        seed: boot_seed,
        replicates,
        redraws,
    })
}
