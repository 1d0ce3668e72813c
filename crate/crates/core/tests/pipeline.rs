use std::collections::BTreeSet;
use std::path::Path;

use pga_core::fixtures::{synthetic_model, SyntheticModelSpec};
use pga_core::pipeline::{
    report_to_csv, report_to_json, run_pipeline, Analysis, BundleEntry, RunConfig,
};
use pga_core::store::{write_tensor, BundleManifest, Tensor};

fn write_model(spec: SyntheticModelSpec, dir: &Path) -> (String, String) {
    let (m, r) = synthetic_model(&spec).unwrap().write(dir).unwrap();
    (m.display().to_string(), r.display().to_string())
}

fn config(manifest: &str, readout: &str, k: usize) -> RunConfig {
    let mut c = RunConfig::new(manifest, readout);
    c.k = k;
    c.null_draws = 30;
    c
}

#[test]
fn aligned_model_has_positive_profile_and_no_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let (m, r) = write_model(SyntheticModelSpec::aligned(300, 96, 24, 5, 1), dir.path());
    let report = run_pipeline(&config(&m, &r, 24)).unwrap();
    let cp = &report.checkpoints[0];
    assert_eq!(cp.layers.len(), 6);
    for l in &cp.layers {
        assert!(l.z().unwrap() > 5.0, "layer {}: {:?}", l.layer, l.z());
        let o = l.orthogonal.as_ref().unwrap();
        assert!(!o.exceeds_p95);
    }
    let summary = cp.summary.as_ref().unwrap();
    assert!(summary.collapse_layers.is_empty());
    assert!(summary.recovered_final);
    let csv = report_to_csv(&report);
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn masked_band_flips_sign_across_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let (m, r) = write_model(SyntheticModelSpec::masked_band(300, 96, 24, 6, 2), dir.path());
    let mut c = config(&m, &r, 24);
    c.ccr_sweep = vec![1, 5];
    c.analyses = [Analysis::Pga].into_iter().collect();
    let report = run_pipeline(&c).unwrap();
    let cp = &report.checkpoints[0];
    // depth 4/6 and 5/6 fall inside the masked band
    for layer in [4, 5] {
        let sweep = cp.layers[layer].ccr_sweep.as_ref().unwrap();
        assert_eq!(sweep[0].order, 1);
        assert!(sweep[0].z.unwrap() < 0.0, "layer {layer}: {sweep:?}");
        assert!(sweep[1].z.unwrap() > 0.0, "layer {layer}: {sweep:?}");
    }
    let summary = cp.summary.as_ref().unwrap();
    assert_eq!(summary.collapse_layers, vec![4, 5]);
    assert!(summary.recovered_final);
}

#[test]
fn checkpoints_produce_a_dynamics_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut early = SyntheticModelSpec::aligned(300, 96, 24, 3, 3);
    early.checkpoint_step = Some(1000);
    let mut late = SyntheticModelSpec::masked_band(300, 96, 24, 3, 3);
    late.checkpoint_step = Some(143000);
    let (m1, r) = write_model(early, &dir.path().join("a"));
    let (m2, r2) = write_model(late, &dir.path().join("b"));
    let mut c = config(&m1, &r, 24);
    c.bundles.push(BundleEntry {
        manifest: m2,
        checkpoint_step: None,
        readout: Some(r2),
    });
    c.analyses = [Analysis::Pga].into_iter().collect();
    let report = run_pipeline(&c).unwrap();
    let dynamics = report.dynamics.unwrap();
    let steps: Vec<_> = dynamics.iter().map(|d| d.checkpoint_step).collect();
    assert_eq!(steps, vec![Some(1000), Some(143000)]);
    assert_eq!(dynamics[0].z_gt5, 4);
}

#[test]
fn json_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (m, r) = write_model(SyntheticModelSpec::aligned(80, 24, 6, 2, 4), dir.path());
    let mut c = config(&m, &r, 6);
    c.analyses.insert(Analysis::Mantel);
    c.statistics.mantel_permutations = 20;
    let a = report_to_json(&run_pipeline(&c).unwrap()).unwrap();
    let b = report_to_json(&run_pipeline(&c).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn no_analyses_echoes_the_config() {
    let mut c = RunConfig::new("missing/manifest.json", "missing/readout.json");
    c.analyses = BTreeSet::new();
    let report = run_pipeline(&c).unwrap();
    assert!(report.checkpoints.is_empty());
    assert_eq!(report.config, c);
}

#[test]
fn failures_name_the_layer_and_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let (m, r) = write_model(SyntheticModelSpec::aligned(60, 16, 4, 3, 5), dir.path());
    let manifest =
        BundleManifest::from_json_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    let file = manifest.layer_files().unwrap()[2].to_string();
    // identical rows: nothing is left after centering
    let flat = Tensor::from_f32(vec![60, 16], vec![0.5; 60 * 16]).unwrap();
    write_tensor(&flat, dir.path().join(file)).unwrap();
    let mut c = config(&m, &r, 4);
    c.analyses = [Analysis::Pga].into_iter().collect();
    let msg = run_pipeline(&c).unwrap_err().to_string();
    assert!(msg.contains("layer 2") && msg.contains("pga"), "{msg}");
}
