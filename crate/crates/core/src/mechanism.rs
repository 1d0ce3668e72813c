//! Bright/dark masking diagnostics, logit-lens decodability and cross-model RSA.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::geometry::{
    center, pairwise_cosine_distances, principal_components, project, sample_random_subspace, Basis,
    RankProfile,
};
use crate::pga::{z_score, NullStats, ReadoutSpectrum};
use crate::spectral::{rankme, singular_values};
use crate::store::{HiddenStateBundle, ReadoutInterface};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationReport {
    pub layer: usize,
    /// 1 − ‖P_k v₁‖²: share of PC1 outside the readout subspace.
    pub pc1_dark_fraction: f64,
    pub pk_v1_norm: f64,
    /// √(k/d), the expected ‖P_k v‖ for a random unit vector.
    pub random_baseline: f64,
    pub effective_rank: f64,
}

pub fn random_baseline(k: usize, d: usize) -> f64 {
    (k as f64 / d as f64).sqrt()
}

fn top_pc(states: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (basis, variances) = principal_components(states, 1, true)?;
    if !(variances[0] > 0.0) {
        return Err(PgaError::invalid("rank-0 states have no principal direction"));
    }
    Ok(basis.columns().column(0).into_owned())
}

/// ‖P_k v‖ for a unit vector v.
fn projected_norm(v: &DVector<f64>, basis: &Basis) -> f64 {
    (basis.columns().transpose() * v).norm().min(1.0)
}

pub fn migration_for_layer(
    states: &DMatrix<f64>,
    basis: &Basis,
    layer: usize,
) -> Result<MigrationReport> {
    let v1 = top_pc(states)?;
    let pk = projected_norm(&v1, basis);
    Ok(MigrationReport {
        layer,
        pc1_dark_fraction: 1.0 - pk * pk,
        pk_v1_norm: pk,
        random_baseline: random_baseline(basis.k(), basis.d()),
        effective_rank: rankme(&singular_values(&center(states))),
    })
}

pub fn pc1_migration(
    bundle: &HiddenStateBundle,
    interface: &ReadoutInterface,
    k: usize,
) -> Result<Vec<MigrationReport>> {
    let basis = ReadoutSpectrum::from_interface(interface).top_k(k)?;
    pc1_migration_with_basis(bundle, &basis)
}

pub fn pc1_migration_with_basis(
    bundle: &HiddenStateBundle,
    basis: &Basis,
) -> Result<Vec<MigrationReport>> {
    if basis.d() != bundle.d {
        return Err(PgaError::DimensionMismatch {
            what: "readout d vs bundle d",
            expected: bundle.d,
            found: basis.d(),
        });
    }
    (0..bundle.layer_count())
        .map(|l| migration_for_layer(&bundle.layer_matrix(l), basis, l).map_err(|e| e.at_layer(l)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcrOverlap {
    pub pk_v1_norm: f64,
    /// |cos(v₁, u₁)| with u₁ the top right singular vector of the readout.
    pub cos_v1_u1: f64,
}

pub fn ccr_readout_overlap(
    states: &DMatrix<f64>,
    interface: &ReadoutInterface,
    k: usize,
) -> Result<CcrOverlap> {
    ccr_readout_overlap_with(states, &ReadoutSpectrum::from_interface(interface), k)
}

pub fn ccr_readout_overlap_with(
    states: &DMatrix<f64>,
    spectrum: &ReadoutSpectrum,
    k: usize,
) -> Result<CcrOverlap> {
    let basis = spectrum.top_k(k)?;
    if states.ncols() != basis.d() {
        return Err(PgaError::DimensionMismatch {
            what: "state width vs readout d",
            expected: basis.d(),
            found: states.ncols(),
        });
    }
    let v1 = top_pc(states)?;
    let u1 = spectrum.right.column(0);
    Ok(CcrOverlap {
        pk_v1_norm: projected_norm(&v1, &basis),
        cos_v1_u1: v1.dot(&u1).abs().min(1.0),
    })
}

/// Per-row LayerNorm over the d entries: zero mean, unit (population)
/// variance with eps 1e-5, then γ scale and β shift.
pub fn layer_norm(states: &DMatrix<f64>, gamma: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let d = states.ncols();
    let mut out = states.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (j, x) in row.iter_mut().enumerate() {
            *x = (*x - mean) * inv * gamma[j] + beta[j];
        }
    }
    out
}

/// Top-1 agreement between argmax(W·h) and the gold token. Ties go to the
/// lowest token id.
pub fn logit_lens_accuracy(
    states: &DMatrix<f64>,
    interface: &ReadoutInterface,
    gold: &[i64],
    apply_ln: bool,
) -> Result<f64> {
    const BLOCK: usize = 4096;
    let (n, d) = states.shape();
    if d != interface.d() {
        return Err(PgaError::DimensionMismatch {
            what: "state width vs readout d",
            expected: interface.d(),
            found: d,
        });
    }
    if gold.len() != n {
        return Err(PgaError::DimensionMismatch {
            what: "gold token count",
            expected: n,
            found: gold.len(),
        });
    }
    if n == 0 {
        return Err(PgaError::InsufficientData("logit lens needs at least one state".into()));
    }
    let vocab = interface.vocab();
    if let Some(bad) = gold.iter().find(|&&g| g < 0 || g as usize >= vocab) {
        return Err(PgaError::invalid(format!(
            "gold token id {bad} outside vocabulary of size {vocab}"
        )));
    }
    let h = if apply_ln {
        let ln = interface.ln.as_ref().ok_or(PgaError::MissingLayerNorm)?;
        layer_norm(states, &ln.gamma, &ln.beta)
    } else {
        states.clone()
    };
    let ht = h.transpose();
    let mut best = vec![(f64::NEG_INFINITY, 0usize); n];
    for start in (0..vocab).step_by(BLOCK) {
        let end = (start + BLOCK).min(vocab);
        let logits = interface.row_block(start, end) * &ht;
        for (i, b) in best.iter_mut().enumerate() {
            for t in 0..(end - start) {
                let v = logits[(t, i)];
                if v > b.0 {
                    *b = (v, start + t);
                }
            }
        }
    }
    let hits = best
        .iter()
        .zip(gold)
        .filter(|((_, arg), &g)| *arg == g as usize)
        .count();
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaResult {
    pub rho_full: f64,
    pub rho_readout: Option<f64>,
    pub null: Option<NullStats>,
    pub z_readout: Option<f64>,
}

fn distance_ranks(x: &DMatrix<f64>) -> Result<RankProfile> {
    let r = RankProfile::new(pairwise_cosine_distances(x)?.condensed());
    if r.is_constant() {
        return Err(PgaError::UndefinedCorrelation("RSA distances are constant"));
    }
    Ok(r)
}

fn projected_ranks(x: &DMatrix<f64>, basis: &Basis) -> Result<RankProfile> {
    distance_ranks(&project(x, basis)?)
}

/// Representational similarity between two models over the same contexts.
/// States are used as given. Null draw `b` projects model a onto a random
/// subspace seeded `seed + 2b` and model b onto one seeded `seed + 2b + 1`.
pub fn cross_model_rsa(
    states_a: &DMatrix<f64>,
    states_b: &DMatrix<f64>,
    basis_a: Option<&Basis>,
    basis_b: Option<&Basis>,
    k: usize,
    null_draws: usize,
    seed: u64,
) -> Result<RsaResult> {
    let n = states_a.nrows();
    if states_b.nrows() != n {
        return Err(PgaError::DimensionMismatch {
            what: "RSA context count",
            expected: n,
            found: states_b.nrows(),
        });
    }
    if n < 4 {
        return Err(PgaError::InsufficientData(format!(
            "RSA needs at least 4 contexts, found {n}"
        )));
    }
    let rho_full = distance_ranks(states_a)?
        .correlation(&distance_ranks(states_b)?)
        .expect("non-constant");
    let (Some(ba), Some(bb)) = (basis_a, basis_b) else {
        return Ok(RsaResult {
            rho_full,
            rho_readout: None,
            null: None,
            z_readout: None,
        });
    };
    for (basis, x) in [(ba, states_a), (bb, states_b)] {
        if basis.k() != k {
            return Err(PgaError::DimensionMismatch {
                what: "RSA basis k",
                expected: k,
                found: basis.k(),
            });
        }
        if basis.d() != x.ncols() {
            return Err(PgaError::DimensionMismatch {
                what: "RSA basis d vs state width",
                expected: x.ncols(),
                found: basis.d(),
            });
        }
    }
    let rho_readout = projected_ranks(states_a, ba)?
        .correlation(&projected_ranks(states_b, bb)?)
        .expect("non-constant");
    if null_draws < 2 {
        return Err(PgaError::invalid("RSA null needs at least 2 draws"));
    }
    let (da, db) = (states_a.ncols(), states_b.ncols());
    let draws: Vec<Result<f64>> = (0..null_draws)
        .into_par_iter()
        .map(|b| {
            let s = seed.wrapping_add(2 * b as u64);
            let ra = projected_ranks(states_a, &sample_random_subspace(da, k, s)?)?;
            let rb = projected_ranks(states_b, &sample_random_subspace(db, k, s.wrapping_add(1))?)?;
            Ok(ra.correlation(&rb).expect("non-constant"))
        })
        .collect();
    let mut samples = Vec::with_capacity(null_draws);
    for (draw, s) in draws.into_iter().enumerate() {
        samples.push(s.map_err(|e| PgaError::NullDrawFailed {
            draw,
            source: Box::new(e),
        })?);
    }
    let null = NullStats::from_samples(samples, seed);
    Ok(RsaResult {
        rho_full,
        rho_readout: Some(rho_readout),
        z_readout: z_score(rho_readout, null.mean, null.std),
        null: Some(null),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::store::{LayerNormParams, ReadoutKind};

    #[test]
    fn baselines() {
        assert!((random_baseline(100, 1024) - 0.3125).abs() < 1e-12);
        assert!((random_baseline(100, 2048) - 0.2209).abs() < 1e-4);
    }

    #[test]
    fn pc1_inside_readout() {
        let mut r = rng::seeded(1);
        let mut x = rng::gaussian_matrix(&mut r, 200, 8) * 0.01;
        for i in 0..200 {
            x[(i, 0)] += 10.0 * ((i % 7) as f64 - 3.0);
        }
        let w = DMatrix::from_fn(8, 8, |i, j| if i == j { 8.0 - i as f64 } else { 0.0 });
        let ro = ReadoutInterface::from_matrix(ReadoutKind::Unembedding, &w).unwrap();
        let spec = ReadoutSpectrum::from_interface(&ro);
        let basis = spec.top_k(2).unwrap();
        let m = migration_for_layer(&x, &basis, 0).unwrap();
        assert!((m.pk_v1_norm - 1.0).abs() < 1e-6);
        assert!(m.pc1_dark_fraction.abs() < 1e-6);
        assert!((m.pc1_dark_fraction + m.pk_v1_norm.powi(2) - 1.0).abs() < 1e-12);
        let o = ccr_readout_overlap_with(&x, &spec, 2).unwrap();
        assert!((o.cos_v1_u1 - 1.0).abs() < 1e-6);
        assert!(o.cos_v1_u1 <= o.pk_v1_norm + 1e-9);
    }

    #[test]
    fn identity_readout_recovers_argmax() {
        let x = DMatrix::from_row_slice(3, 3, &[0.1, 2.0, 0.3, 5.0, 1.0, 1.0, 0.0, 0.0, 0.2]);
        let ro = ReadoutInterface::from_matrix(ReadoutKind::Unembedding, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(logit_lens_accuracy(&x, &ro, &[1, 0, 2], false).unwrap(), 1.0);
        assert!((logit_lens_accuracy(&x, &ro, &[1, 1, 1], false).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let ro = ReadoutInterface::from_matrix(ReadoutKind::Unembedding, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(logit_lens_accuracy(&x, &ro, &[0], false).unwrap(), 1.0);
        assert_eq!(logit_lens_accuracy(&x, &ro, &[1], false).unwrap(), 0.0);
    }

    #[test]
    fn ln_requirements_and_scale_invariance() {
        let mut r = rng::seeded(2);
        let x = rng::gaussian_matrix(&mut r, 50, 6);
        let w = rng::gaussian_matrix(&mut r, 10, 6);
        let gold: Vec<i64> = (0..50).map(|i| (i % 10) as i64).collect();
        let bare = ReadoutInterface::from_matrix(ReadoutKind::Unembedding, &w).unwrap();
        assert!(matches!(
            logit_lens_accuracy(&x, &bare, &gold, true),
            Err(PgaError::MissingLayerNorm)
        ));
        let mut with_ln = bare.clone();
        with_ln.ln = Some(LayerNormParams {
            gamma: vec![1.0; 6],
            beta: vec![0.0; 6],
        });
        assert!(logit_lens_accuracy(&x, &with_ln, &[10; 50], true).is_err());
        let big = &x * 1e3;
        let big_r = &x * 1e3 * 1.7;
        assert_eq!(
            logit_lens_accuracy(&big, &with_ln, &gold, true).unwrap(),
            logit_lens_accuracy(&big_r, &with_ln, &gold, true).unwrap()
        );
    }

    #[test]
    fn rsa_same_model_and_symmetry() {
        let mut r = rng::seeded(3);
        let a = rng::gaussian_matrix(&mut r, 40, 10);
        let b = rng::gaussian_matrix(&mut r, 40, 7);
        let same = cross_model_rsa(&a, &a, None, None, 3, 4, 0).unwrap();
        assert!((same.rho_full - 1.0).abs() < 1e-12);
        let ba = sample_random_subspace(10, 3, 1).unwrap();
        let bb = sample_random_subspace(7, 3, 2).unwrap();
        let ab = cross_model_rsa(&a, &b, Some(&ba), Some(&bb), 3, 4, 0).unwrap();
        let ba_ = cross_model_rsa(&b, &a, Some(&bb), Some(&ba), 3, 4, 0).unwrap();
        assert!((ab.rho_full - ba_.rho_full).abs() < 1e-12);
        assert!((ab.rho_readout.unwrap() - ba_.rho_readout.unwrap()).abs() < 1e-12);
        assert!(cross_model_rsa(&a, &a.rows(0, 30).into_owned(), None, None, 3, 4, 0).is_err());
    }
}
