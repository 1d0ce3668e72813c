use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{seed_offsets, Analysis, BundleEntry, RunConfig};
use super::report::{
    dynamics_rows, CheckpointReport, LayerRecord, ReportBundle, RsaLayer, RsaPair, Summary,
    SweepPoint,
};
use crate::error::{PgaError, Result};
use crate::geometry::{anisotropy_correct, center, pairwise_cosine_distances, project, Basis};
use crate::mechanism::{ccr_readout_overlap_with, cross_model_rsa, logit_lens_accuracy, migration_for_layer};
use crate::pga::{
    orthogonal_pga, subspace_pga, BasisKind, CollapseThresholds, PgaConfig, PgaResult,
    ReadoutSpectrum,
};
use crate::spectral::{spectral_pga_correlation, spectral_suite};
use crate::stats::{bootstrap_pga, mantel_test, stability_sweep, MIN_SUBSAMPLE};
use crate::store::{load_bundle, load_readout, HiddenStateBundle, ReadoutInterface};

struct Readout {
    interface: ReadoutInterface,
    spectrum: ReadoutSpectrum,
}

impl Readout {
    fn load(config: &RunConfig, path: &str) -> Result<Self> {
        let interface = load_readout(config.resolve(path))?;
        let spectrum = ReadoutSpectrum::from_interface(&interface);
        Ok(Readout {
            interface,
            spectrum,
        })
    }
}

struct Bases<'a> {
    readout: &'a Readout,
    top: Basis,
    complement: Option<Basis>,
    control: Option<Basis>,
}

fn wrap<T>(r: Result<T>, analysis: Analysis) -> Result<T> {
    r.map_err(|e| e.in_analysis(analysis.name()))
}

fn pga_config(config: &RunConfig) -> PgaConfig {
    PgaConfig {
        k: config.k,
        null_draws: config.null_draws,
        ccr_order: config.ccr_order,
        base_seed: config.base_seed,
    }
}

fn score(
    corrected: &DMatrix<f64>,
    basis: &Basis,
    config: &RunConfig,
    kind: BasisKind,
    layer: usize,
    depth: f64,
    order: usize,
) -> Result<PgaResult> {
    let mut r = subspace_pga(corrected, basis, config.null_draws, config.base_seed, kind)?;
    r.layer = layer;
    r.relative_depth = depth;
    r.ccr_order = order;
    Ok(r)
}

fn analyze_layer(
    config: &RunConfig,
    bundle: &HiddenStateBundle,
    bases: &Bases,
    layer: usize,
) -> Result<LayerRecord> {
    let raw = bundle.layer_matrix(layer);
    let depth = bundle.relative_depth(layer);
    let kind: BasisKind = bases.readout.interface.kind.into();
    let mut rec = LayerRecord {
        layer,
        relative_depth: depth,
        ..LayerRecord::default()
    };
    let needs_corrected = [Analysis::Pga, Analysis::Orthogonal, Analysis::Mantel]
        .iter()
        .any(|&a| config.wants(a));
    let corrected = if needs_corrected {
        Some(anisotropy_correct(&raw, config.ccr_order)?)
    } else {
        None
    };

    if config.wants(Analysis::Pga) {
        let corrected = corrected.as_ref().expect("computed above");
        let main = wrap(
            score(corrected, &bases.top, config, kind, layer, depth, config.ccr_order),
            Analysis::Pga,
        )?;
        if !config.ccr_sweep.is_empty() {
            let mut points = Vec::with_capacity(config.ccr_sweep.len());
            for &c in &config.ccr_sweep {
                let r = if c == config.ccr_order {
                    main.clone()
                } else {
                    let x = wrap(anisotropy_correct(&raw, c), Analysis::Pga)?;
                    wrap(score(&x, &bases.top, config, kind, layer, depth, c), Analysis::Pga)?
                };
                points.push(SweepPoint {
                    order: c,
                    rho_readout: r.rho_readout,
                    null_mean: r.null.mean,
                    null_std: r.null.std,
                    z: r.z,
                });
            }
            rec.ccr_sweep = Some(points);
        }
        if let Some(control) = &bases.control {
            rec.control_pga = Some(wrap(
                score(
                    corrected,
                    control,
                    config,
                    BasisKind::InputEmbedding,
                    layer,
                    depth,
                    config.ccr_order,
                ),
                Analysis::Pga,
            )?);
        }
        rec.pga = Some(main);
    }

    if config.wants(Analysis::Orthogonal) {
        let corrected = corrected.as_ref().expect("computed above");
        let complement = bases
            .complement
            .as_ref()
            .ok_or_else(|| PgaError::invalid("k = d leaves no orthogonal complement"))
            .map_err(|e| e.in_analysis("orthogonal"))?;
        rec.orthogonal = Some(wrap(
            orthogonal_pga(
                corrected,
                complement,
                config.null_draws,
                config.base_seed.wrapping_add(seed_offsets::ORTHOGONAL),
            ),
            Analysis::Orthogonal,
        )?);
    }

    if config.wants(Analysis::Spectral) {
        let mut s = wrap(spectral_suite(&center(&raw)), Analysis::Spectral)?;
        s.layer = layer;
        rec.spectral = Some(s);
    }

    if config.wants(Analysis::Mechanism) {
        rec.migration = Some(wrap(migration_for_layer(&raw, &bases.top, layer), Analysis::Mechanism)?);
        rec.ccr_overlap = Some(wrap(
            ccr_readout_overlap_with(&raw, &bases.readout.spectrum, config.k),
            Analysis::Mechanism,
        )?);
        if let Some(gold) = &bundle.token_ids {
            let already_normed = layer == bundle.num_layers && bundle.final_post_ln;
            let apply_ln = bases.readout.interface.ln.is_some() && !already_normed;
            rec.logit_lens_accuracy = Some(wrap(
                logit_lens_accuracy(&raw, &bases.readout.interface, gold, apply_ln),
                Analysis::Mechanism,
            )?);
        }
    }

    let stats_layer = config
        .statistics
        .layers
        .as_ref()
        .is_none_or(|ls| ls.contains(&layer));
    if stats_layer && config.wants(Analysis::Mantel) {
        let corrected = corrected.as_ref().expect("computed above");
        let r = (|| {
            let full = pairwise_cosine_distances(corrected)?;
            let projected = pairwise_cosine_distances(&project(corrected, &bases.top)?)?;
            mantel_test(
                &full,
                &projected,
                config.statistics.mantel_permutations,
                config.base_seed.wrapping_add(seed_offsets::MANTEL),
            )
        })();
        rec.mantel = Some(wrap(r, Analysis::Mantel)?);
    }
    if stats_layer && config.wants(Analysis::Bootstrap) {
        rec.bootstrap = Some(wrap(
            bootstrap_pga(
                &raw,
                &bases.top,
                &pga_config(config),
                config.statistics.bootstrap_resamples,
                config.base_seed.wrapping_add(seed_offsets::BOOTSTRAP),
            ),
            Analysis::Bootstrap,
        )?);
    }
    if stats_layer && config.wants(Analysis::Stability) {
        let sizes: Vec<usize> = config
            .statistics
            .stability_sizes
            .iter()
            .copied()
            .filter(|&s| s >= MIN_SUBSAMPLE && s <= raw.nrows())
            .collect();
        if !sizes.is_empty() {
            rec.stability = Some(wrap(
                stability_sweep(
                    &raw,
                    &bases.top,
                    &sizes,
                    config.statistics.stability_repeats,
                    &pga_config(config),
                    config.base_seed.wrapping_add(seed_offsets::STABILITY),
                ),
                Analysis::Stability,
            )?);
        }
    }
    Ok(rec)
}

fn check_compatible(bundle: &HiddenStateBundle, readout: &Readout) -> Result<()> {
    if readout.interface.d() != bundle.d {
        return Err(PgaError::DimensionMismatch {
            what: "readout d vs bundle d",
            expected: bundle.d,
            found: readout.interface.d(),
        });
    }
    bundle.check_vocab(readout.interface.vocab())
}

fn analyze_bundle(
    config: &RunConfig,
    entry: &BundleEntry,
    bundle: &HiddenStateBundle,
    readout: &Readout,
    control: Option<&Readout>,
) -> Result<CheckpointReport> {
    check_compatible(bundle, readout)?;
    let top = readout.spectrum.top_k(config.k)?;
    let complement = if config.wants(Analysis::Orthogonal) && config.k < bundle.d {
        Some(readout.spectrum.complement(config.k)?)
    } else {
        None
    };
    let control = match control {
        Some(c) if config.wants(Analysis::Pga) => {
            if c.interface.d() != bundle.d {
                return Err(PgaError::DimensionMismatch {
                    what: "control readout d vs bundle d",
                    expected: bundle.d,
                    found: c.interface.d(),
                });
            }
            Some(c.spectrum.top_k(config.k)?)
        }
        _ => None,
    };
    let bases = Bases {
        readout,
        top,
        complement,
        control,
    };
    let layers: Vec<LayerRecord> = (0..bundle.layer_count())
        .into_par_iter()
        .map(|l| analyze_layer(config, bundle, &bases, l).map_err(|e| e.at_layer(l)))
        .collect::<Result<_>>()?;

    let profile: Vec<PgaResult> = layers.iter().filter_map(|l| l.pga.clone()).collect();
    let summary = (!profile.is_empty())
        .then(|| Summary::from_profile(&profile, &CollapseThresholds::default()));
    let spectral_pga_correlation = if config.wants(Analysis::Spectral) && config.wants(Analysis::Pga) {
        let reports: Vec<_> = layers.iter().filter_map(|l| l.spectral.clone()).collect();
        Some(wrap(spectral_pga_correlation(&reports, &profile), Analysis::Spectral)?)
    } else {
        None
    };
    Ok(CheckpointReport {
        model_id: bundle.model_id.clone(),
        checkpoint_step: entry.checkpoint_step.or(bundle.checkpoint_step),
        manifest: entry.manifest.clone(),
        d: bundle.d,
        num_layers: bundle.num_layers,
        n_contexts: bundle.n_contexts,
        layers,
        summary,
        spectral_pga_correlation,
    })
}

fn rsa_pair(
    config: &RunConfig,
    a: (&HiddenStateBundle, &Readout),
    b: (&HiddenStateBundle, &Readout),
) -> Result<Vec<RsaLayer>> {
    let (ba, ra) = a;
    let (bb, rb) = b;
    let basis_a = ra.spectrum.top_k(config.k)?;
    let basis_b = rb.spectrum.top_k(config.k)?;
    (0..ba.layer_count())
        .into_par_iter()
        .map(|la| {
            let depth = ba.relative_depth(la);
            let lb = (depth * bb.num_layers as f64).round() as usize;
            let xa = anisotropy_correct(&ba.layer_matrix(la), config.ccr_order)?;
            let xb = anisotropy_correct(&bb.layer_matrix(lb), config.ccr_order)?;
            let result = cross_model_rsa(
                &xa,
                &xb,
                Some(&basis_a),
                Some(&basis_b),
                config.k,
                config.null_draws,
                config.base_seed.wrapping_add(seed_offsets::RSA),
            )
            .map_err(|e| e.at_layer(la))?;
            Ok(RsaLayer {
                layer_a: la,
                layer_b: lb,
                relative_depth: depth,
                result,
            })
        })
        .collect()
}

/// Runs every requested analysis on every bundle. Seeds derive from
/// `base_seed` through [`seed_offsets`], so the report is a pure function of
/// the config and the input files.
pub fn run_pipeline(config: &RunConfig) -> Result<ReportBundle> {
    config.validate()?;
    if config.analyses.is_empty() {
        return Ok(ReportBundle {
            config: config.clone(),
            checkpoints: Vec::new(),
            dynamics: None,
            rsa: Vec::new(),
        });
    }
    let mut readouts: BTreeMap<String, Readout> = BTreeMap::new();
    let mut readout_for = |path: &str| -> Result<()> {
        if !readouts.contains_key(path) {
            readouts.insert(path.to_string(), Readout::load(config, path)?);
        }
        Ok(())
    };
    readout_for(&config.readout)?;
    for e in &config.bundles {
        if let Some(r) = &e.readout {
            readout_for(r)?;
        }
    }
    let control = match &config.control_readout {
        Some(p) => Some(Readout::load(config, p)?),
        None => None,
    };
    let keep_bundles = config.wants(Analysis::Rsa);
    let mut kept = Vec::new();
    let mut checkpoints = Vec::with_capacity(config.bundles.len());
    for entry in &config.bundles {
        let bundle = load_bundle(config.resolve(&entry.manifest))?;
        let readout = &readouts[entry.readout.as_deref().unwrap_or(&config.readout)];
        checkpoints.push(analyze_bundle(config, entry, &bundle, readout, control.as_ref())?);
        if keep_bundles {
            kept.push(bundle);
        }
    }
    let mut rsa = Vec::new();
    if keep_bundles {
        for i in 0..kept.len() {
            for j in (i + 1)..kept.len() {
                let ra = &readouts[config.bundles[i].readout.as_deref().unwrap_or(&config.readout)];
                let rb = &readouts[config.bundles[j].readout.as_deref().unwrap_or(&config.readout)];
                let layers = wrap(rsa_pair(config, (&kept[i], ra), (&kept[j], rb)), Analysis::Rsa)?;
                rsa.push(RsaPair { a: i, b: j, layers });
            }
        }
    }
    let dynamics = (checkpoints.len() > 1)
        .then(|| dynamics_rows(&checkpoints))
        .filter(|rows| !rows.is_empty());
    let report = ReportBundle {
        config: config.clone(),
        checkpoints,
        dynamics,
        rsa,
    };
    report.audit()?;
    Ok(report)
}
