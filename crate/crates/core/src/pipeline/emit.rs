use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::Format;
use super::report::{LayerRecord, ReportBundle};
use crate::error::{PgaError, Result};

pub const JSON_FILE: &str = "report.json";
pub const CSV_FILE: &str = "layers.csv";
pub const SVG_FILE: &str = "z_profile.svg";

pub fn report_to_json(report: &ReportBundle) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| PgaError::Json {
        context: "report".into(),
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

pub fn report_from_json(text: &str) -> Result<ReportBundle> {
    serde_json::from_str(text).map_err(|e| PgaError::Json {
        context: "report".into(),
        message: e.to_string(),
    })
}

pub fn load_report(path: impl AsRef<Path>) -> Result<ReportBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PgaError::io(path, e))?;
    report_from_json(&text)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

const FIXED_COLUMNS: [&str; 33] = [
    "model_id",
    "checkpoint_step",
    "layer",
    "relative_depth",
    "k",
    "ccr_order",
    "rho_readout",
    "null_mean",
    "null_std",
    "z",
    "control_z",
    "rho_ortho",
    "ortho_p95",
    "ortho_exceeds_p95",
    "rankme",
    "stable_rank",
    "participation_ratio",
    "alpha_req",
    "condition_number",
    "isotropy",
    "twonn_id",
    "pk_v1_norm",
    "pc1_dark_fraction",
    "random_baseline",
    "effective_rank",
    "cos_v1_u1",
    "logit_lens_accuracy",
    "mantel_observed",
    "mantel_p",
    "boot_point",
    "boot_lo",
    "boot_hi",
    "stability_sizes",
];

fn layer_cells(l: &LayerRecord) -> Vec<String> {
    let p = l.pga.as_ref();
    let o = l.orthogonal.as_ref();
    let s = l.spectral.as_ref();
    let m = l.migration.as_ref();
    let b = l.bootstrap.as_ref();
    vec![
        l.layer.to_string(),
        l.relative_depth.to_string(),
        p.map(|p| p.k.to_string()).unwrap_or_default(),
        p.map(|p| p.ccr_order.to_string()).unwrap_or_default(),
        opt(p.map(|p| p.rho_readout)),
        opt(p.map(|p| p.null.mean)),
        opt(p.map(|p| p.null.std)),
        opt(p.and_then(|p| p.z)),
        opt(l.control_pga.as_ref().and_then(|p| p.z)),
        opt(o.map(|o| o.rho_ortho)),
        opt(o.map(|o| o.p95)),
        o.map(|o| o.exceeds_p95.to_string()).unwrap_or_default(),
        opt(s.map(|s| s.rankme)),
        opt(s.map(|s| s.stable_rank)),
        opt(s.map(|s| s.participation_ratio)),
        opt(s.and_then(|s| s.alpha_req)),
        opt(s.map(|s| s.condition_number)),
        opt(s.map(|s| s.isotropy)),
        opt(s.and_then(|s| s.twonn_id)),
        opt(m.map(|m| m.pk_v1_norm)),
        opt(m.map(|m| m.pc1_dark_fraction)),
        opt(m.map(|m| m.random_baseline)),
        opt(m.map(|m| m.effective_rank)),
        opt(l.ccr_overlap.map(|c| c.cos_v1_u1)),
        opt(l.logit_lens_accuracy),
        opt(l.mantel.as_ref().map(|m| m.observed)),
        opt(l.mantel.as_ref().map(|m| m.p_value)),
        opt(b.map(|b| b.point)),
        opt(b.map(|b| b.lo)),
        opt(b.map(|b| b.hi)),
        l.stability
            .as_ref()
            .map(|rows| {
                rows.iter()
                    .map(|r| format!("{}:{}:{}", r.size, r.mean_z, r.std_z))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default(),
    ]
}

/// One row per (checkpoint, layer); CCR sweep orders become `z_ccr{c}` columns.
pub fn report_to_csv(report: &ReportBundle) -> String {
    let orders: BTreeSet<usize> = report
        .checkpoints
        .iter()
        .flat_map(|c| c.layers.iter())
        .filter_map(|l| l.ccr_sweep.as_ref())
        .flat_map(|s| s.iter().map(|p| p.order))
        .collect();
    let mut out = String::new();
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(orders.iter().map(|c| format!("z_ccr{c}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for c in &report.checkpoints {
        for l in &c.layers {
            let mut row = vec![
                escape(&c.model_id),
                c.checkpoint_step.map(|s| s.to_string()).unwrap_or_default(),
            ];
            row.extend(layer_cells(l).into_iter().map(|s| escape(&s)));
            for &o in &orders {
                let z = l
                    .ccr_sweep
                    .as_ref()
                    .and_then(|s| s.iter().find(|p| p.order == o))
                    .and_then(|p| p.z);
                row.push(opt(z));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line chart of z against relative depth, one line per checkpoint, with the
/// collapse layers of each checkpoint shaded.
/// Label, z points and collapse points for one checkpoint.
type Series = (String, Vec<(f64, f64)>, Vec<(f64, f64)>);

pub fn report_to_svg(report: &ReportBundle) -> String {
    let (w, h) = (800.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let series: Vec<Series> = report
        .checkpoints
        .iter()
        .map(|c| {
            let pts: Vec<(f64, f64)> = c
                .layers
                .iter()
                .filter_map(|l| Some((l.relative_depth, l.z()?)))
                .collect();
            let half = 0.5 / c.num_layers.max(1) as f64;
            let bands = c
                .summary
                .as_ref()
                .map(|s| {
                    s.collapse_layers
                        .iter()
                        .filter_map(|&l| c.layers.get(l))
                        .map(|l| {
                            let x = l.relative_depth;
                            ((x - half).max(0.0), (x + half).min(1.0))
                        })
                        .collect()
                })
                .unwrap_or_default();
            let label = match c.checkpoint_step {
                Some(s) => format!("{} @ {}", c.model_id, s),
                None => c.model_id.clone(),
            };
            (label, pts, bands)
        })
        .collect();
    let zs = series.iter().flat_map(|s| s.1.iter().map(|p| p.1));
    let (mut zmin, mut zmax) = zs.fold((0.0f64, 0.0f64), |(lo, hi), z| (lo.min(z), hi.max(z)));
    if zmax - zmin < 1e-9 {
        zmin -= 1.0;
        zmax += 1.0;
    }
    let pad = 0.05 * (zmax - zmin);
    zmin -= pad;
    zmax += pad;
    let sx = |x: f64| left + x * pw;
    let sy = |z: f64| top + (zmax - z) / (zmax - zmin) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    for (_, _, bands) in &series {
        for (a, b) in bands {
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{ph:.2}" fill="#d62728" fill-opacity="0.12"/>"##,
                sx(*a),
                sx(*b) - sx(*a)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<line x1="{left:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{:.2}" stroke="black"/>"#,
        top + ph
    );
    let _ = writeln!(
        s,
        r##"<line x1="{left:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        sy(0.0),
        left + pw,
        sy(0.0)
    );
    for i in 0..=4 {
        let x = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x:.2}</text>"#,
            sx(x),
            top + ph + 18.0
        );
    }
    for i in 0..=4 {
        let z = zmin + (zmax - zmin) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{z:.1}</text>"#,
            left - 6.0,
            sy(z) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">relative depth (layer / L)</text>"#,
        left + pw / 2.0,
        h - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">z</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (label, pts, _)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, z)| format!("{:.2},{:.2}", sx(x), sy(z)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for c in &coords {
            let (x, y) = c.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{}</text>"#,
            left + 10.0,
            xml_escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| PgaError::io(&path, e))?;
    Ok(path)
}

/// Writes the requested formats into `dir` and returns the paths written.
pub fn emit_report(
    report: &ReportBundle,
    formats: &BTreeSet<Format>,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| PgaError::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        written.push(match f {
            Format::Json => write_file(dir.join(JSON_FILE), &report_to_json(report)?)?,
            Format::Csv => write_file(dir.join(CSV_FILE), &report_to_csv(report))?,
            Format::Svg => write_file(dir.join(SVG_FILE), &report_to_svg(report))?,
        });
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::RunConfig;

    #[test]
    fn empty_report_is_config_echo() {
        let mut cfg = RunConfig::new("m.json", "r.json");
        cfg.analyses.clear();
        let r = ReportBundle {
            config: cfg,
            checkpoints: vec![],
            dynamics: None,
            rsa: vec![],
        };
        let json = report_to_json(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v.as_object().unwrap().keys().collect::<Vec<_>>(), vec!["config"]);
        assert_eq!(report_from_json(&json).unwrap(), r);
        assert_eq!(report_to_csv(&r).lines().count(), 1);
        assert!(report_to_svg(&r).starts_with("<svg"));
    }

    #[test]
    fn csv_escaping() {
        assert_eq!(escape("a,b"), "\"a,b\"");
        assert_eq!(escape("say \"hi\""), "\"say \"\"hi\"\"\"");
        assert_eq!(escape("plain"), "plain");
    }
}
