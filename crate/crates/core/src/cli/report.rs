use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde_json::json;

use super::common::{hash_file, hash_outputs, write_file, Manifest, OutputLock};
use super::config::{RunConfig, Settings};
use crate::error::{Error, Result};
use crate::experiments::{aggregate_runs, read_results, write_aggregates, Aggregate, Condition, Design};

pub const AGGREGATE_NAME: &str = "aggregate.csv";
pub const FIGURE_NAME: &str = "report.svg";

const PANEL_W: f64 = 240.0;
const PANEL_H: f64 = 180.0;
const MARGIN: f64 = 40.0;
const COLS: usize = 3;

/// Summarize one or more `results.csv` files into `aggregate.csv` and a
/// multi-panel accuracy-versus-exposures figure.
pub fn report(cfg: &RunConfig) -> Result<PathBuf> {
    let mut s = Settings::new(cfg);
    let out_dir = s.required::<String>("out_dir").map(PathBuf::from);
    let results: Vec<String> = s.list("results", &[]);
    if results.is_empty() {
        s.error("results: list at least one results.csv");
    }
    let overlays: BTreeMap<String, f64> = s.prefixed("overlay");
    let pairs: Vec<(&str, f64)> = overlays.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let overlay = parse_overlay(&pairs).unwrap_or_else(|e| {
        s.error(format!("overlay: {e}"));
        BTreeMap::new()
    });
    let config = s.finish()?;
    let out_dir = out_dir.expect("validated");
    let _lock = OutputLock::acquire(&out_dir)?;

    let mut inputs = BTreeMap::new();
    let mut rows = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let path = PathBuf::from(r);
        inputs.insert(format!("results/{i}"), hash_file(&path)?);
        rows.extend(read_results(&path)?);
    }
    let aggs = aggregate_runs(&rows)?;
    let single: Vec<String> = aggs
        .iter()
        .filter(|a| a.single_run)
        .map(|a| format!("{}/{}@{}", a.design, a.condition, a.exposures))
        .collect();
    if !single.is_empty() {
        eprintln!(
            "warning: {} group(s) come from a single run; their s.e.m. is reported as 0",
            single.len()
        );
    }
    let agg_path = out_dir.join(AGGREGATE_NAME);
    write_aggregates(&agg_path, &aggs)?;
    let svg_path = out_dir.join(FIGURE_NAME);
    write_file(&svg_path, render_svg(&aggs, &overlay))?;
    Manifest {
        command: "report",
        crate_version: env!("CARGO_PKG_VERSION"),
        config: &config,
        derived: json!({ "n_rows": rows.len(), "n_groups": aggs.len(), "single_run_groups": single }),
        inputs,
        outputs: hash_outputs(&out_dir, &[agg_path, svg_path])?,
    }
    .write(&out_dir)?;
    Ok(out_dir)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel per (design, condition): mean accuracy against exposures with
/// s.e.m. bars, a chance line at 0.5 and an optional human benchmark.
pub fn render_svg(aggs: &[Aggregate], overlay: &BTreeMap<Condition, f64>) -> String {
    let mut panels: BTreeMap<(Design, Condition), Vec<&Aggregate>> = BTreeMap::new();
    for a in aggs {
        panels.entry((a.design, a.condition)).or_default().push(a);
    }
    let any_single = aggs.iter().any(|a| a.single_run);
    let n = panels.len().max(1);
    let rows = n.div_ceil(COLS);
    let width = COLS.min(n) as f64 * (PANEL_W + MARGIN) + MARGIN;
    let banner = if any_single { 24.0 } else { 0.0 };
    let height = rows as f64 * (PANEL_H + MARGIN * 1.5) + MARGIN + banner;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if any_single {
        let _ = writeln!(
            svg,
            r##"<text x="{MARGIN}" y="18" fill="#b00">warning: some points come from a single run (s.e.m. shown as 0)</text>"##
        );
    }
    for (i, ((design, cond), points)) in panels.iter().enumerate() {
        let x0 = MARGIN + (i % COLS) as f64 * (PANEL_W + MARGIN);
        let y0 = banner + MARGIN + (i / COLS) as f64 * (PANEL_H + MARGIN * 1.5);
        let max_e = points.iter().map(|p| p.exposures).max().unwrap_or(0).max(1) as f64;
        let px = |e: u64| x0 + e as f64 / max_e * PANEL_W;
        let py = |a: f64| y0 + (1.0 - a.clamp(0.0, 1.0)) * PANEL_H;
        let _ = writeln!(
            svg,
            r#"<text x="{x0}" y="{}" font-weight="bold">{} / {}</text>"#,
            y0 - 6.0,
            esc(design.as_str()),
            esc(cond.as_str())
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        for tick in [0.0, 0.5, 1.0] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{tick:.1}</text>"#,
                x0 - 4.0,
                py(tick) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 + PANEL_W,
            y0 + PANEL_H + 14.0,
            max_e
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x0}" y="{}">exposures</text>"#,
            y0 + PANEL_H + 14.0
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#888" stroke-dasharray="4 3"/>"##,
            x0 + PANEL_W,
            y = py(0.5)
        );
        if let Some(&h) = overlay.get(cond) {
            let _ = writeln!(
                svg,
                r##"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#2a7"/><text x="{}" y="{}" fill="#2a7" text-anchor="end">human {h:.2}</text>"##,
                x0 + PANEL_W,
                x0 + PANEL_W - 4.0,
                py(h) - 4.0,
                y = py(h)
            );
        }
        let path: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.exposures), py(p.mean_accuracy)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#225"/>"##,
            path.join(" ")
        );
        for p in points {
            let (x, y) = (px(p.exposures), py(p.mean_accuracy));
            let (lo, hi) = (py(p.mean_accuracy - p.sem), py(p.mean_accuracy + p.sem));
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="#225"/><circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}"/>"##,
                if p.single_run { "#b00" } else { "#225" }
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reject overlay values outside [0, 1] before they reach the figure.
pub fn parse_overlay(pairs: &[(&str, f64)]) -> Result<BTreeMap<Condition, f64>> {
    pairs
        .iter()
        .map(|&(name, v)| {
            let c: Condition = name.parse()?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("overlay {name}: {v} outside [0, 1]")));
            }
            Ok((c, v))
        })
        .collect()
}
