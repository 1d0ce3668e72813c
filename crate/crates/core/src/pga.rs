//! Subspace PGA: how much of a layer's pairwise cosine-distance structure
//! survives projection onto the readout subspace, scored against random
//! subspaces of the same dimension.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::geometry::{
    anisotropy_correct, pairwise_cosine_distances, project, sample_random_subspace, Basis,
    RankProfile,
};
use crate::geometry::{complete_orthonormal, symmetric_eigen_desc};
use crate::store::{HiddenStateBundle, ReadoutInterface, ReadoutKind};

/// Null standard deviations at or below this leave z undefined.
pub const MIN_NULL_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Unembedding,
    InputEmbedding,
    ExplicitBasis,
}

impl From<ReadoutKind> for BasisKind {
    fn from(k: ReadoutKind) -> Self {
        match k {
            ReadoutKind::Unembedding => BasisKind::Unembedding,
            ReadoutKind::InputEmbedding => BasisKind::InputEmbedding,
        }
    }
}

/// Correlations from `draws` random subspaces, seeded `base_seed + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullStats {
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (divisor = number of draws).
    pub std: f64,
    pub draws: usize,
    pub base_seed: u64,
}

impl NullStats {
    pub fn from_samples(samples: Vec<f64>, base_seed: u64) -> Self {
        let (mean, std) = mean_std_population(&samples);
        NullStats {
            draws: samples.len(),
            samples,
            mean,
            std,
            base_seed,
        }
    }

    /// Empirical 95th percentile by nearest rank: the ⌈0.95·B⌉-th smallest sample.
    pub fn p95(&self) -> f64 {
        nearest_rank_percentile(&self.samples, 95.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgaResult {
    pub layer: usize,
    pub relative_depth: f64,
    pub rho_readout: f64,
    pub null: NullStats,
    /// `None` when the null standard deviation is ≤ 1e-12.
    pub z: Option<f64>,
    pub k: usize,
    pub ccr_order: usize,
    pub readout_kind: BasisKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgaConfig {
    pub k: usize,
    pub null_draws: usize,
    pub ccr_order: usize,
    pub base_seed: u64,
}

impl Default for PgaConfig {
    fn default() -> Self {
        PgaConfig {
            k: 100,
            null_draws: 100,
            ccr_order: 1,
            base_seed: 0,
        }
    }
}

pub fn mean_std_population(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn nearest_rank_percentile(samples: &[f64], pct: f64) -> f64 {
    assert!(!samples.is_empty(), "percentile of an empty sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// (ρ − μ) / σ, undefined when σ ≤ 1e-12.
pub fn z_score(rho: f64, null_mean: f64, null_std: f64) -> Option<f64> {
    if null_std > MIN_NULL_STD {
        Some((rho - null_mean) / null_std)
    } else {
        None
    }
}

/// Right singular structure of a readout matrix, computed once per run from
/// the d×d Gram `WᵀW`. All d eigenvectors are kept, so the complement of the
/// top-k span is always available even when vocab < d.
#[derive(Debug, Clone)]
pub struct ReadoutSpectrum {
    pub kind: BasisKind,
    pub singular_values: Vec<f64>,
    /// d×d, columns ordered by descending singular value.
    pub right: DMatrix<f64>,
    pub vocab: usize,
}

impl ReadoutSpectrum {
    pub fn from_interface(interface: &ReadoutInterface) -> Self {
        const BLOCK: usize = 2048;
        let vocab = interface.vocab();
        let d = interface.d();
        let starts: Vec<usize> = (0..vocab).step_by(BLOCK).collect();
        let partials: Vec<DMatrix<f64>> = starts
            .par_iter()
            .map(|&s| {
                let block = interface.row_block(s, (s + BLOCK).min(vocab));
                block.transpose() * block
            })
            .collect();
        let mut gram = DMatrix::zeros(d, d);
        for p in partials {
            gram += p;
        }
        let gram = (&gram + gram.transpose()) * 0.5;
        let (vals, right) = symmetric_eigen_desc(gram);
        let singular_values = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
        ReadoutSpectrum {
            kind: interface.kind.into(),
            singular_values,
            right,
            vocab,
        }
    }

    pub fn d(&self) -> usize {
        self.right.nrows()
    }

    fn check_k(&self, k: usize) -> Result<()> {
        let max_k = self.vocab.min(self.d());
        if k == 0 || k > max_k {
            return Err(PgaError::invalid(format!(
                "k = {k} outside 1..={max_k} (min(vocab, d))"
            )));
        }
        Ok(())
    }

    /// Span of the top-k right singular vectors.
    pub fn top_k(&self, k: usize) -> Result<Basis> {
        self.check_k(k)?;
        Ok(Basis::from_orthonormal(
            self.right.columns(0, k).into_owned(),
        ))
    }

    /// The remaining d − k directions.
    pub fn complement(&self, k: usize) -> Result<Basis> {
        self.check_k(k)?;
        let d = self.d();
        if k >= d {
            return Err(PgaError::invalid("k = d leaves an empty orthogonal complement"));
        }
        let cols = self.right.columns(k, d - k).into_owned();
        // eigenvectors of a symmetric solver are orthonormal; re-complete only
        // if round-off in a large null space has degraded them
        let basis = match Basis::new(cols.clone()) {
            Ok(b) => b,
            Err(_) => {
                let top = self.right.columns(0, k).into_owned();
                let full = complete_orthonormal(&top, d);
                Basis::from_orthonormal(full.columns(k, d - k).into_owned())
            }
        };
        Ok(basis)
    }

    /// Cumulative fraction of Σσ² captured by the top-k directions, k = 1..=rank.
    pub fn coverage_curve(&self) -> Vec<(usize, f64)> {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        let rank = self.vocab.min(self.d());
        let mut acc = 0.0;
        (0..rank)
            .map(|i| {
                acc += self.singular_values[i].powi(2);
                (i + 1, if total > 0.0 { (acc / total).min(1.0) } else { 0.0 })
            })
            .collect()
    }
}

pub fn readout_subspace(interface: &ReadoutInterface, k: usize) -> Result<Basis> {
    ReadoutSpectrum::from_interface(interface).top_k(k)
}

/// Full-space distance ranks of one (already corrected) state matrix, reused
/// for the readout projection and every null draw.
pub struct DistancePreservation<'a> {
    states: &'a DMatrix<f64>,
    full: RankProfile,
}

impl<'a> DistancePreservation<'a> {
    pub fn new(states: &'a DMatrix<f64>) -> Result<Self> {
        if states.nrows() < 4 {
            return Err(PgaError::InsufficientData(format!(
                "readout correlation needs at least 4 states, found {}",
                states.nrows()
            )));
        }
        let full = RankProfile::new(pairwise_cosine_distances(states)?.condensed());
        if full.is_constant() {
            return Err(PgaError::UndefinedCorrelation("full-space distances"));
        }
        Ok(DistancePreservation { states, full })
    }

    pub fn full_ranks(&self) -> &RankProfile {
        &self.full
    }

    /// Spearman correlation between full-space and projected distances.
    pub fn correlation(&self, basis: &Basis) -> Result<f64> {
        if basis.k() == basis.d() && basis.d() == self.states.ncols() {
            // a full-dimensional basis is a rotation: distances are unchanged
            return Ok(1.0);
        }
        let coords = project(self.states, basis)?;
        self.full
            .correlation_with_values(pairwise_cosine_distances(&coords)?.condensed())
            .ok_or(PgaError::UndefinedCorrelation("projected distances"))
    }

    pub fn null(&self, k: usize, draws: usize, base_seed: u64) -> Result<NullStats> {
        if draws < 2 {
            return Err(PgaError::invalid(format!(
                "the null needs at least 2 draws, found {draws}"
            )));
        }
        let d = self.states.ncols();
        let samples: Vec<Result<f64>> = (0..draws)
            .into_par_iter()
            .map(|b| {
                let basis = sample_random_subspace(d, k, base_seed.wrapping_add(b as u64))?;
                self.correlation(&basis)
            })
            .collect();
        let mut out = Vec::with_capacity(draws);
        for (draw, s) in samples.into_iter().enumerate() {
            match s {
                Ok(v) => out.push(v),
                Err(e) => {
                    return Err(PgaError::NullDrawFailed {
                        draw,
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(NullStats::from_samples(out, base_seed))
    }
}

/// ρ_readout for states the caller has already corrected.
pub fn readout_correlation(states: &DMatrix<f64>, basis: &Basis) -> Result<f64> {
    DistancePreservation::new(states)?.correlation(basis)
}

pub fn null_distribution(
    states: &DMatrix<f64>,
    k: usize,
    draws: usize,
    base_seed: u64,
) -> Result<NullStats> {
    DistancePreservation::new(states)?.null(k, draws, base_seed)
}

/// z-score of the readout correlation against random k-subspaces, k = basis.k().
pub fn subspace_pga(
    states: &DMatrix<f64>,
    basis: &Basis,
    null_draws: usize,
    base_seed: u64,
    kind: BasisKind,
) -> Result<PgaResult> {
    if states.ncols() != basis.d() {
        return Err(PgaError::DimensionMismatch {
            what: "state width vs basis dimension",
            expected: basis.d(),
            found: states.ncols(),
        });
    }
    let eval = DistancePreservation::new(states)?;
    let rho_readout = eval.correlation(basis)?;
    let null = eval.null(basis.k(), null_draws, base_seed)?;
    Ok(PgaResult {
        layer: 0,
        relative_depth: 1.0,
        rho_readout,
        z: z_score(rho_readout, null.mean, null.std),
        null,
        k: basis.k(),
        ccr_order: 0,
        readout_kind: kind,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalPga {
    pub rho_ortho: f64,
    pub null: NullStats,
    pub p95: f64,
    pub exceeds_p95: bool,
}

/// PGA computed in the orthogonal complement of the readout subspace, compared
/// with the nearest-rank 95th percentile of random (d−k)-subspace correlations.
pub fn orthogonal_pga(
    states: &DMatrix<f64>,
    complement: &Basis,
    null_draws: usize,
    base_seed: u64,
) -> Result<OrthogonalPga> {
    let eval = DistancePreservation::new(states)?;
    let rho_ortho = eval.correlation(complement)?;
    let null = eval.null(complement.k(), null_draws, base_seed)?;
    let p95 = null.p95();
    Ok(OrthogonalPga {
        rho_ortho,
        exceeds_p95: rho_ortho > p95,
        p95,
        null,
    })
}

/// Orthogonal PGA straight from a readout interface.
pub fn orthogonal_pga_for_interface(
    states: &DMatrix<f64>,
    interface: &ReadoutInterface,
    k: usize,
    null_draws: usize,
    base_seed: u64,
) -> Result<OrthogonalPga> {
    let complement = ReadoutSpectrum::from_interface(interface).complement(k)?;
    orthogonal_pga(states, &complement, null_draws, base_seed)
}

/// Applies CCR-c for each order and scores with identical null seeds.
pub fn ccr_sweep(
    raw_states: &DMatrix<f64>,
    basis: &Basis,
    orders: &[usize],
    null_draws: usize,
    base_seed: u64,
    kind: BasisKind,
) -> Result<Vec<(usize, PgaResult)>> {
    if let Some(&max) = orders.iter().max() {
        if max + 2 > raw_states.nrows() {
            return Err(PgaError::invalid(format!(
                "CCR order {max} needs at least {} states",
                max + 2
            )));
        }
    }
    orders
        .iter()
        .map(|&c| {
            let corrected = anisotropy_correct(raw_states, c)?;
            let mut r = subspace_pga(&corrected, basis, null_draws, base_seed, kind)?;
            r.ccr_order = c;
            Ok((c, r))
        })
        .collect()
}

/// Corrects and scores one layer's raw states.
pub fn layer_pga(
    raw_states: &DMatrix<f64>,
    basis: &Basis,
    config: &PgaConfig,
    kind: BasisKind,
) -> Result<PgaResult> {
    let corrected = anisotropy_correct(raw_states, config.ccr_order)?;
    let mut r = subspace_pga(&corrected, basis, config.null_draws, config.base_seed, kind)?;
    r.ccr_order = config.ccr_order;
    Ok(r)
}

/// One PgaResult per layer `0..=L`, each layer corrected independently.
pub fn layer_profile_with_basis(
    bundle: &HiddenStateBundle,
    basis: &Basis,
    kind: BasisKind,
    config: &PgaConfig,
) -> Result<Vec<PgaResult>> {
    if basis.d() != bundle.d {
        return Err(PgaError::DimensionMismatch {
            what: "readout d vs bundle d",
            expected: bundle.d,
            found: basis.d(),
        });
    }
    (0..bundle.layer_count())
        .map(|l| {
            let mut r = layer_pga(&bundle.layer_matrix(l), basis, config, kind)
                .map_err(|e| e.at_layer(l))?;
            r.layer = l;
            r.relative_depth = bundle.relative_depth(l);
            Ok(r)
        })
        .collect()
}

pub fn layer_profile(
    bundle: &HiddenStateBundle,
    interface: &ReadoutInterface,
    config: &PgaConfig,
) -> Result<Vec<PgaResult>> {
    if interface.d() != bundle.d {
        return Err(PgaError::DimensionMismatch {
            what: "readout d vs bundle d",
            expected: bundle.d,
            found: interface.d(),
        });
    }
    let basis = ReadoutSpectrum::from_interface(interface).top_k(config.k)?;
    layer_profile_with_basis(bundle, &basis, interface.kind.into(), config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseThresholds {
    /// Layers (other than the final one) with z below this are collapsed.
    pub collapse_below: f64,
    /// The final layer counts as recovered when its z exceeds this.
    pub recovered_above: f64,
}

impl Default for CollapseThresholds {
    fn default() -> Self {
        CollapseThresholds {
            collapse_below: 0.0,
            recovered_above: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerZ {
    pub layer: usize,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseSummary {
    pub collapse_layers: Vec<usize>,
    pub recovered_final: bool,
    pub peak: Option<LayerZ>,
    pub min: Option<LayerZ>,
}

/// Layers with undefined z are skipped; the final layer is the last entry.
pub fn collapse_detector(profile: &[PgaResult], thresholds: &CollapseThresholds) -> CollapseSummary {
    let last = profile.len().saturating_sub(1);
    let mut collapse_layers = Vec::new();
    let mut peak: Option<LayerZ> = None;
    let mut min: Option<LayerZ> = None;
    for (i, r) in profile.iter().enumerate() {
        let Some(z) = r.z else { continue };
        if i != last && z < thresholds.collapse_below {
            collapse_layers.push(r.layer);
        }
        if peak.as_ref().is_none_or(|p| z > p.z) {
            peak = Some(LayerZ { layer: r.layer, z });
        }
        if min.as_ref().is_none_or(|m| z < m.z) {
            min = Some(LayerZ { layer: r.layer, z });
        }
    }
    let recovered_final = profile
        .last()
        .and_then(|r| r.z)
        .is_some_and(|z| z > thresholds.recovered_above);
    CollapseSummary {
        collapse_layers,
        recovered_final,
        peak,
        min,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn fake(layer: usize, z: Option<f64>) -> PgaResult {
        PgaResult {
            layer,
            relative_depth: 0.0,
            rho_readout: 0.0,
            null: NullStats::from_samples(vec![0.0, 0.0], 0),
            z,
            k: 1,
            ccr_order: 1,
            readout_kind: BasisKind::ExplicitBasis,
        }
    }

    #[test]
    fn z_arithmetic() {
        assert!((z_score(0.499, 0.903, 0.0125).unwrap() + 32.32).abs() < 1e-9);
        assert!((z_score(0.850, 0.599, 0.0167).unwrap() - 15.0299).abs() < 1e-3);
        assert_eq!(z_score(0.7, 0.7, 0.02), Some(0.0));
        assert_eq!(z_score(0.7, 0.6, 0.0), None);
    }

    #[test]
    fn population_std() {
        let s = NullStats::from_samples(vec![1.0, 3.0], 5);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.draws, 2);
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(nearest_rank_percentile(&v, 95.0), 95.0);
        assert_eq!(nearest_rank_percentile(&[3.0, 1.0, 2.0], 95.0), 3.0);
    }

    #[test]
    fn states_inside_span_correlate_perfectly() {
        let basis = sample_random_subspace(20, 5, 3).unwrap();
        let mut r = rng::seeded(1);
        let states = rng::gaussian_matrix(&mut r, 30, 5) * basis.columns().transpose();
        assert!((readout_correlation(&states, &basis).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_basis_gives_one_and_undefined_z() {
        let mut r = rng::seeded(2);
        let states = rng::gaussian_matrix(&mut r, 25, 6);
        let basis = sample_random_subspace(6, 6, 9).unwrap();
        assert_eq!(readout_correlation(&states, &basis).unwrap(), 1.0);
        let res = subspace_pga(&states, &basis, 5, 0, BasisKind::ExplicitBasis).unwrap();
        assert_eq!(res.z, None);
    }

    #[test]
    fn null_is_deterministic_and_positive_on_isotropic_states() {
        let mut r = rng::seeded(3);
        let states = rng::gaussian_matrix(&mut r, 300, 256);
        let a = null_distribution(&states, 64, 4, 42).unwrap();
        let b = null_distribution(&states, 64, 4, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.mean > 0.0);
        assert!(a.samples.iter().all(|s| (-1.0..=1.0).contains(s)));
    }

    #[test]
    fn null_needs_two_draws() {
        let mut r = rng::seeded(3);
        let states = rng::gaussian_matrix(&mut r, 10, 4);
        assert!(null_distribution(&states, 2, 1, 0).is_err());
    }

    #[test]
    fn annihilated_row_aborts_null() {
        // one row is exactly zero after projection onto any basis: it is zero
        let mut states = DMatrix::from_fn(8, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        states.row_mut(0).fill(0.0);
        states[(0, 0)] = 1e-300;
        let err = null_distribution(&states, 2, 3, 0);
        assert!(err.is_err());
    }

    #[test]
    fn collapse_detection() {
        let zs = [5.0, 3.0, -1.0, -2.0, -0.5, 9.3];
        let profile: Vec<_> = zs.iter().enumerate().map(|(l, &z)| fake(l, Some(z))).collect();
        let s = collapse_detector(&profile, &CollapseThresholds::default());
        assert_eq!(s.collapse_layers, vec![2, 3, 4]);
        assert!(s.recovered_final);
        assert_eq!(s.peak.unwrap().layer, 5);
        assert_eq!(s.min.unwrap().layer, 3);
    }

    #[test]
    fn first_occurrence_ties() {
        let profile: Vec<_> = [1.0, 4.0, 4.0, 1.0]
            .iter()
            .enumerate()
            .map(|(l, &z)| fake(l, Some(z)))
            .collect();
        let s = collapse_detector(&profile, &CollapseThresholds::default());
        assert_eq!(s.peak.unwrap().layer, 1);
        assert_eq!(s.min.unwrap().layer, 0);
        assert!(!s.recovered_final);
    }

    #[test]
    fn spectrum_and_complement() {
        let m = DMatrix::from_fn(6, 4, |i, j| if i == j { [4.0, 3.0, 2.0, 1.0][j] } else { 0.0 });
        let ro = ReadoutInterface::from_matrix(ReadoutKind::Unembedding, &m).unwrap();
        let spec = ReadoutSpectrum::from_interface(&ro);
        assert!((spec.singular_values[0] - 4.0).abs() < 1e-12);
        let top = spec.top_k(2).unwrap();
        assert!((top.columns()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((top.columns()[(1, 1)] - 1.0).abs() < 1e-12);
        let comp = spec.complement(2).unwrap();
        assert_eq!(comp.k(), 2);
        assert!(spec.top_k(5).is_err());
        let curve = spec.coverage_curve();
        assert!((curve[0].1 - 16.0 / 30.0).abs() < 1e-12);
        assert!((curve[3].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_completed_when_vocab_below_d() {
        let m = DMatrix::from_row_slice(2, 5, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let ro = ReadoutInterface::from_matrix(ReadoutKind::Unembedding, &m).unwrap();
        let spec = ReadoutSpectrum::from_interface(&ro);
        let comp = spec.complement(1).unwrap();
        assert_eq!(comp.k(), 4);
        assert!(Basis::new(comp.columns().clone()).is_ok());
    }
}
