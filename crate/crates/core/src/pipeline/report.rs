use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{PgaError, Result};
use crate::mechanism::{CcrOverlap, MigrationReport, RsaResult};
use crate::pga::{collapse_detector, CollapseThresholds, LayerZ, OrthogonalPga, PgaResult};
use crate::spectral::{MetricCorrelation, SpectralReport};
use crate::stats::{BootstrapCI, MantelResult, StabilityRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub order: usize,
    pub rho_readout: f64,
    pub null_mean: f64,
    pub null_std: f64,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer: usize,
    pub relative_depth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pga: Option<PgaResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccr_sweep: Option<Vec<SweepPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_pga: Option<PgaResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthogonal: Option<OrthogonalPga>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub migration: Option<MigrationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccr_overlap: Option<CcrOverlap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit_lens_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mantel: Option<MantelResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapCI>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<Vec<StabilityRow>>,
}

impl LayerRecord {
    pub fn z(&self) -> Option<f64> {
        self.pga.as_ref().and_then(|p| p.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub peak: Option<LayerZ>,
    pub min: Option<LayerZ>,
    pub collapse_layers: Vec<usize>,
    pub recovered_final: bool,
    pub z_gt2: usize,
    pub z_gt5: usize,
    pub layers_scored: usize,
}

impl Summary {
    pub fn from_profile(profile: &[PgaResult], thresholds: &CollapseThresholds) -> Self {
        let c = collapse_detector(profile, thresholds);
        let zs: Vec<f64> = profile.iter().filter_map(|p| p.z).collect();
        Summary {
            peak: c.peak,
            min: c.min,
            collapse_layers: c.collapse_layers,
            recovered_final: c.recovered_final,
            z_gt2: zs.iter().filter(|&&z| z > 2.0).count(),
            z_gt5: zs.iter().filter(|&&z| z > 5.0).count(),
            layers_scored: zs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointReport {
    pub model_id: String,
    pub checkpoint_step: Option<u64>,
    pub manifest: String,
    pub d: usize,
    pub num_layers: usize,
    pub n_contexts: usize,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_pga_correlation: Option<Vec<MetricCorrelation>>,
}

impl CheckpointReport {
    pub fn profile(&self) -> Vec<PgaResult> {
        self.layers.iter().filter_map(|l| l.pga.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub checkpoint_step: Option<u64>,
    pub model_id: String,
    pub z_gt2: usize,
    pub z_gt5: usize,
    pub min_z: Option<f64>,
    pub min_layer: Option<usize>,
    pub peak_z: Option<f64>,
    pub peak_layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaLayer {
    pub layer_a: usize,
    pub layer_b: usize,
    pub relative_depth: f64,
    pub result: RsaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaPair {
    /// Indices into `checkpoints`.
    pub a: usize,
    pub b: usize,
    pub layers: Vec<RsaLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<CheckpointReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<Vec<DynamicsRow>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rsa: Vec<RsaPair>,
}

pub(crate) fn dynamics_rows(checkpoints: &[CheckpointReport]) -> Vec<DynamicsRow> {
    let mut rows: Vec<DynamicsRow> = checkpoints
        .iter()
        .filter_map(|c| {
            let s = c.summary.as_ref()?;
            Some(DynamicsRow {
                checkpoint_step: c.checkpoint_step,
                model_id: c.model_id.clone(),
                z_gt2: s.z_gt2,
                z_gt5: s.z_gt5,
                min_z: s.min.as_ref().map(|m| m.z),
                min_layer: s.min.as_ref().map(|m| m.layer),
                peak_z: s.peak.as_ref().map(|m| m.z),
                peak_layer: s.peak.as_ref().map(|m| m.layer),
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        a.checkpoint_step
            .cmp(&b.checkpoint_step)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    rows
}

impl ReportBundle {
    /// Recomputes every summary and the dynamics table from the per-layer
    /// records and checks they match what is stored.
    pub fn audit(&self) -> Result<()> {
        for (i, c) in self.checkpoints.iter().enumerate() {
            for (pos, l) in c.layers.iter().enumerate() {
                if l.layer != pos {
                    return Err(PgaError::invalid(format!(
                        "audit: checkpoint {i} has layer {} at position {pos}",
                        l.layer
                    )));
                }
                if let Some(p) = &l.pga {
                    let expected = crate::pga::z_score(p.rho_readout, p.null.mean, p.null.std);
                    let consistent = match (p.z, expected) {
                        (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * b.abs().max(1.0),
                        (None, None) => true,
                        _ => false,
                    };
                    if !consistent {
                        return Err(PgaError::invalid(format!(
                            "audit: checkpoint {i} layer {pos} z disagrees with its null"
                        )));
                    }
                }
            }
            let profile = c.profile();
            let expected = (!profile.is_empty())
                .then(|| Summary::from_profile(&profile, &CollapseThresholds::default()));
            if expected != c.summary {
                return Err(PgaError::invalid(format!(
                    "audit: checkpoint {i} summary does not match its layer records"
                )));
            }
        }
        let expected_dynamics = (self.checkpoints.len() > 1)
            .then(|| dynamics_rows(&self.checkpoints))
            .filter(|rows| !rows.is_empty());
        if expected_dynamics != self.dynamics {
            return Err(PgaError::invalid(
                "audit: dynamics table does not match checkpoint summaries",
            ));
        }
        Ok(())
    }
}
