//! Run configuration, end-to-end orchestration and report emission.

mod config;
mod emit;
mod report;
mod run;

pub use config::{
    default_analyses, seed_offsets, Analysis, BundleEntry, Format, RunConfig, StatisticsConfig,
};
pub use emit::{
    emit_report, load_report, report_from_json, report_to_csv, report_to_json, report_to_svg,
    CSV_FILE, JSON_FILE, SVG_FILE,
};
pub use report::{
    CheckpointReport, DynamicsRow, LayerRecord, ReportBundle, RsaLayer, RsaPair, Summary,
    SweepPoint,
};
pub use run::run_pipeline;
