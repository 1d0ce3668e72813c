use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};

/// Offsets added to `base_seed` for each seeded sub-analysis. PGA null draws
/// use `base_seed` itself.
pub mod seed_offsets {
    pub const ORTHOGONAL: u64 = 500_000;
    pub const BOOTSTRAP: u64 = 1_000_000;
    pub const MANTEL: u64 = 2_000_000;
    pub const STABILITY: u64 = 3_000_000;
    pub const RSA: u64 = 4_000_000;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Pga,
    Orthogonal,
    Spectral,
    Mechanism,
    Mantel,
    Bootstrap,
    Stability,
    Rsa,
}

impl Analysis {
    pub const ALL: [Analysis; 8] = [
        Analysis::Pga,
        Analysis::Orthogonal,
        Analysis::Spectral,
        Analysis::Mechanism,
        Analysis::Mantel,
        Analysis::Bootstrap,
        Analysis::Stability,
        Analysis::Rsa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Pga => "pga",
            Analysis::Orthogonal => "orthogonal",
            Analysis::Spectral => "spectral",
            Analysis::Mechanism => "mechanism",
            Analysis::Mantel => "mantel",
            Analysis::Bootstrap => "bootstrap",
            Analysis::Stability => "stability",
            Analysis::Rsa => "rsa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| PgaError::invalid(format!("unknown analysis {s:?}")))
    }

    /// Parses a comma-separated list such as `pga,spectral`.
    pub fn parse_list(s: &str) -> Result<BTreeSet<Analysis>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Analysis::parse)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleEntry {
    pub manifest: String,
    /// Overrides the step recorded in the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_step: Option<u64>,
    /// Per-bundle readout, for comparing different models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatisticsConfig {
    pub mantel_permutations: usize,
    pub bootstrap_resamples: usize,
    pub stability_sizes: Vec<usize>,
    pub stability_repeats: usize,
    /// Restricts Mantel, bootstrap and stability to these layers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
}

impl Default for StatisticsConfig {
    fn default() -> Self {
        StatisticsConfig {
            mantel_permutations: 1000,
            bootstrap_resamples: 1000,
            stability_sizes: vec![100, 200, 500, 1000],
            stability_repeats: 5,
            layers: None,
        }
    }
}

fn default_k() -> usize {
    100
}
fn default_null_draws() -> usize {
    100
}
fn default_ccr_order() -> usize {
    1
}
fn default_ccr_sweep() -> Vec<usize> {
    vec![1, 5, 10]
}
fn default_output_dir() -> String {
    "pga-report".into()
}
pub fn default_analyses() -> BTreeSet<Analysis> {
    [
        Analysis::Pga,
        Analysis::Orthogonal,
        Analysis::Spectral,
        Analysis::Mechanism,
    ]
    .into_iter()
    .collect()
}
fn default_formats() -> BTreeSet<Format> {
    [Format::Json, Format::Csv, Format::Svg].into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub bundles: Vec<BundleEntry>,
    pub readout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_readout: Option<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_null_draws")]
    pub null_draws: usize,
    #[serde(default = "default_ccr_order")]
    pub ccr_order: usize,
    #[serde(default = "default_ccr_sweep")]
    pub ccr_sweep: Vec<usize>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_analyses")]
    pub analyses: BTreeSet<Analysis>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_formats")]
    pub formats: BTreeSet<Format>,
    #[serde(default)]
    pub statistics: StatisticsConfig,
    /// Directory relative paths resolve against; not part of the echo.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// A config with all defaults for one bundle and readout.
    pub fn new(manifest: impl Into<String>, readout: impl Into<String>) -> Self {
        RunConfig {
            bundles: vec![BundleEntry {
                manifest: manifest.into(),
                checkpoint_step: None,
                readout: None,
            }],
            readout: readout.into(),
            control_readout: None,
            k: default_k(),
            null_draws: default_null_draws(),
            ccr_order: default_ccr_order(),
            ccr_sweep: default_ccr_sweep(),
            base_seed: 0,
            analyses: default_analyses(),
            output_dir: default_output_dir(),
            formats: default_formats(),
            statistics: StatisticsConfig::default(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| PgaError::Json {
            context: "run config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a JSON config; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PgaError::io(path, e))?;
        let mut cfg = RunConfig::from_json_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(PgaError::invalid("k must be at least 1"));
        }
        if self.null_draws < 2 {
            return Err(PgaError::invalid("null_draws must be at least 2"));
        }
        if !self.analyses.is_empty() && self.bundles.is_empty() {
            return Err(PgaError::invalid("at least one bundle is required"));
        }
        if self.analyses.contains(&Analysis::Rsa) && self.bundles.len() < 2 {
            return Err(PgaError::invalid("rsa needs at least two bundles"));
        }
        let s = &self.statistics;
        if self.analyses.contains(&Analysis::Mantel) && s.mantel_permutations == 0 {
            return Err(PgaError::invalid("mantel_permutations must be at least 1"));
        }
        if self.analyses.contains(&Analysis::Bootstrap) && s.bootstrap_resamples == 0 {
            return Err(PgaError::invalid("bootstrap_resamples must be at least 1"));
        }
        if self.analyses.contains(&Analysis::Stability) && s.stability_repeats == 0 {
            return Err(PgaError::invalid("stability_repeats must be at least 1"));
        }
        Ok(())
    }

    pub fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json_str(
            r#"{"bundles": [{"manifest": "m.json"}], "readout": "r.json"}"#,
        )
        .unwrap();
        assert_eq!(cfg.k, 100);
        assert_eq!(cfg.null_draws, 100);
        assert_eq!(cfg.ccr_order, 1);
        assert_eq!(cfg.ccr_sweep, vec![1, 5, 10]);
        assert_eq!(cfg.analyses, default_analyses());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(RunConfig::from_json_str(r#"{"bundles": [], "readout": "r", "kk": 1}"#).is_err());
        assert!(RunConfig::from_json_str(
            r#"{"bundles": [{"manifest": "m"}], "readout": "r", "null_draws": 1}"#
        )
        .is_err());
        assert!(RunConfig::from_json_str(
            r#"{"bundles": [{"manifest": "m"}], "readout": "r", "analyses": ["rsa"]}"#
        )
        .is_err());
        assert!(RunConfig::from_json_str(r#"{"bundles": [], "readout": "r", "analyses": []}"#).is_ok());
    }

    #[test]
    fn analysis_lists() {
        let set = Analysis::parse_list("spectral, pga").unwrap();
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec![Analysis::Pga, Analysis::Spectral]);
        assert!(Analysis::parse_list("pga,nope").is_err());
    }

    #[test]
    fn relative_paths_follow_config() {
        let mut cfg = RunConfig::new("a/m.json", "/abs/r.json");
        cfg.base_dir = PathBuf::from("/runs/x");
        assert_eq!(cfg.resolve("a/m.json"), PathBuf::from("/runs/x/a/m.json"));
        assert_eq!(cfg.resolve("/abs/r.json"), PathBuf::from("/abs/r.json"));
    }
}
