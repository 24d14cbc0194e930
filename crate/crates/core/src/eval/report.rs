use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::ops::OpCount;
use super::recall::RecallCurve;
use super::storage::StorageReport;
use crate::error::{invalid, Result};

pub const CSV_HEADER: &str = "dataset,L,noise_scale,d,K,radius,recall,mean_Nr";

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn render_csv(curves: &[RecallCurve]) -> Result<String> {
    if curves.is_empty() {
        return invalid("no recall curves to report");
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in curves {
        let m = &c.meta;
        for (r, v) in c.radii.iter().zip(&c.recall) {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.3}",
                m.dataset, m.l, m.noise_scale, m.d, m.k, r, v, m.mean_nr
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Recall against radius, one polyline per curve.
pub fn render_svg(curves: &[RecallCurve]) -> Result<String> {
    if curves.is_empty() {
        return invalid("no recall curves to plot");
    }
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 220.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let max_r = curves
        .iter()
        .flat_map(|c| c.radii.iter().copied())
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{left} {top} V{:.1} H{:.1}" stroke="black" fill="none"/>"#,
        top + ph,
        left + pw
    )
    .unwrap();
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + ph * (1.0 - v);
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v:.2}</text>"#,
            left - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    for tick in 0..=4 {
        let r = max_r * tick as f64 / 4.0;
        let x = left + pw * tick as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{r:.0}</text>"#,
            top + ph + 16.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">localization radius (frames)</text>"#,
        left + pw / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" transform="rotate(-90 14 {:.1})" text-anchor="middle">recall</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    )
    .unwrap();

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = c
            .radii
            .iter()
            .zip(&c.recall)
            .map(|(&r, &v)| format!("{:.1},{:.1}", left + pw * r as f64 / max_r, top + ph * (1.0 - v)))
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = top + 14.0 * i as f64 + 10.0;
        let m = &c.meta;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{color}">{} L={} noise={}</text>"#,
            w - right + 10.0,
            m.dataset,
            m.l,
            m.noise_scale
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `recall.csv`, `recall.svg`, `storage.json` and `ops.json` into `out_dir`.
pub fn emit_report(
    curves: &[RecallCurve],
    storage: &StorageReport,
    ops: &[(String, OpCount)],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let csv = render_csv(curves)?;
    let svg = render_svg(curves)?;
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let storage_json = json!({
        "model": storage,
        "total_bytes": storage.total_bytes(),
        "total_mb": storage.total_mb(),
    });
    let ops_json: serde_json::Map<String, serde_json::Value> = ops
        .iter()
        .map(|(name, c)| {
            (
                name.clone(),
                json!({ "counts": c, "total": c.total() }),
            )
        })
        .collect();
    let files = [
        ("recall.csv", csv),
        ("recall.svg", svg),
        ("storage.json", serde_json::to_string_pretty(&storage_json)? + "\n"),
        ("ops.json", serde_json::to_string_pretty(&ops_json)? + "\n"),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
