//! Report files: JSON, JSON lines, CSV, SVG charts and the terminal table.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::Analysis;
use crate::config::EvalConfig;
use crate::matching::Evaluator;
use crate::ranges::CategoryAp;
use crate::taxonomy::{records_to_jsonl, ErrorKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Embedded in every JSON report. Holds nothing that varies between identical runs, so
/// wall-clock timings and the worker count live elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: EvalConfig,
    pub inputs: Vec<InputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Manifest {
    pub fn new(config: &EvalConfig, inputs: &[(&str, &Path)]) -> io::Result<Self> {
        let inputs = inputs
            .iter()
            .map(|(role, path)| {
                Ok(InputDigest {
                    role: role.to_string(),
                    path: path.display().to_string(),
                    sha256: sha256_hex(&fs::read(path)?),
                })
            })
            .collect::<io::Result<_>>()?;
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            inputs,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub json: bool,
    pub csv: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            json: true,
            csv: true,
            svg: true,
        }
    }
}

impl Formats {
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut f = Formats {
            json: false,
            csv: false,
            svg: false,
        };
        for part in s.split(',').map(str::trim) {
            match part {
                "json" => f.json = true,
                "csv" => f.csv = true,
                "svg" => f.svg = true,
                other => return Err(format!("unknown format {other:?} (json|csv|svg)")),
            }
        }
        Ok(f)
    }
}

fn to_json_string(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn tier_label(k: usize) -> String {
    format!("AR@{k}")
}

pub fn summary_json(analysis: &Analysis, manifest: &Manifest) -> Value {
    let eval = &analysis.global.eval;
    let ar: serde_json::Map<String, Value> = eval
        .recall_tiers
        .iter()
        .zip(&eval.ar)
        .map(|(&k, v)| (tier_label(k), json!(v)))
        .collect();
    let categories: Vec<Value> = eval
        .categories
        .iter()
        .map(|c| {
            json!({
                "id": c.category,
                "name": c.name,
                "n_gt": c.n_gt,
                "n_pred": c.n_pred,
                "map": c.mean_ap(),
                "ap50": c.ap50,
                "ap75": c.ap75,
            })
        })
        .collect();
    let ranges: Vec<Value> = analysis
        .ranges
        .bins
        .iter()
        .map(|b| json!({"label": b.label, "n_gt": b.n_gt, "map": b.map, "ap50": b.ap50}))
        .collect();
    json!({
        "manifest": manifest,
        "map": eval.map,
        "ap50": eval.ap50,
        "ap75": eval.ap75,
        "ar": ar,
        "thresholds": eval.thresholds,
        "categories": categories,
        "errors": analysis.global.errors,
        "weights": analysis.global.weights,
        "ranges": ranges,
    })
}

pub fn weights_json(analysis: &Analysis, manifest: &Manifest) -> Value {
    let w = analysis.global.weights.as_ref();
    let mut v = json!({
        "manifest": manifest,
        "base_ap50": w.map(|w| w.base_ap50),
        "weights": w.map(|w| &w.weights),
        "fix_all_ap50": w.map(|w| w.fix_all_ap50),
    });
    if !analysis.sweep.is_empty() {
        v["sweep"] = json!(analysis.sweep);
    }
    v
}

pub fn ranges_json(analysis: &Analysis, manifest: &Manifest) -> Value {
    let mut v = json!(analysis.ranges);
    v["manifest"] = json!(manifest);
    v
}

/// One row per (category, bin), with the unfiltered evaluation as bin `all`.
pub fn metrics_csv(analysis: &Analysis) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "category_id",
        "category",
        "bin",
        "lo",
        "hi",
        "n_gt",
        "map",
        "ap50",
    ])
    .unwrap();
    let num = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut rows = |bin: &str, lo: String, hi: String, cats: &[CategoryAp]| {
        for c in cats {
            w.write_record([
                c.category.to_string(),
                c.name.clone(),
                bin.to_string(),
                lo.clone(),
                hi.clone(),
                c.n_gt.to_string(),
                num(c.map),
                num(c.ap50),
            ])
            .unwrap();
        }
    };
    rows(
        "all",
        String::new(),
        String::new(),
        &analysis.ranges.global.categories,
    );
    for b in &analysis.ranges.bins {
        let hi = b.hi.map(|h| h.to_string()).unwrap_or_default();
        rows(&b.label, b.lo.to_string(), hi, &b.categories);
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn kind_colour(kind: &str) -> &'static str {
    match kind {
        "Cls" => "#4e79a7",
        "Dup" => "#f28e2b",
        "Spat" => "#e15759",
        "Temp" => "#76b7b2",
        "Both" => "#59a14f",
        "Bkg" => "#edc948",
        "Miss" => "#b07aa1",
        _ => "#9c9c9c",
    }
}

/// Grouped bar chart. Every bar carries its value to two decimals; heights are proportional
/// to the values, so an all-zero chart has flat bars.
pub fn render_bar_chart(
    title: &str,
    groups: &[(String, Vec<(String, f64)>)],
    timestamp: Option<u64>,
) -> String {
    let bar_w = 28.0;
    let gap = 6.0;
    let group_gap = 30.0;
    let (left, top, plot_h) = (50.0, 50.0, 220.0);
    let max = groups
        .iter()
        .flat_map(|(_, bars)| bars.iter().map(|b| b.1))
        .fold(0.0f64, f64::max);
    let scale = if max > 0.0 { plot_h / max } else { 0.0 };
    let plot_w: f64 = groups
        .iter()
        .map(|(_, bars)| bars.len() as f64 * (bar_w + gap) + group_gap)
        .sum::<f64>()
        .max(100.0);
    let width = left + plot_w + 20.0;
    let height = top + plot_h + 70.0;
    let base_y = top + plot_h;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    if let Some(t) = timestamp {
        writeln!(s, "<metadata>generated {t}</metadata>").unwrap();
    }
    writeln!(
        s,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        xml_escape(title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{left}" y1="{base_y}" x2="{}" y2="{base_y}" stroke="black"/>"#,
        left + plot_w
    )
    .unwrap();
    let mut x = left + group_gap / 2.0;
    for (label, bars) in groups {
        let group_start = x;
        for (name, value) in bars {
            let h = value.max(0.0) * scale;
            writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w}" height="{h:.2}" fill="{}"><title>{}</title></rect>"#,
                base_y - h,
                kind_colour(name),
                xml_escape(name)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{value:.2}</text>"#,
                x + bar_w / 2.0,
                base_y - h - 4.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x + bar_w / 2.0,
                base_y + 14.0,
                xml_escape(name)
            )
            .unwrap();
            x += bar_w + gap;
        }
        if !label.is_empty() {
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
                (group_start + x - gap) / 2.0,
                base_y + 34.0,
                xml_escape(label)
            )
            .unwrap();
        }
        x += group_gap;
    }
    s.push_str("</svg>\n");
    s
}

fn weight_bars(weights: Option<&crate::weights::ErrorWeightReport>) -> Vec<(String, f64)> {
    ErrorKind::ALL
        .iter()
        .map(|&k| (k.name().to_string(), weights.map_or(0.0, |w| w.weight(k))))
        .collect()
}

pub fn weights_svg(analysis: &Analysis, timestamp: Option<u64>) -> String {
    let groups = vec![(String::new(), weight_bars(analysis.global.weights.as_ref()))];
    render_bar_chart("Error weights (dAP@50)", &groups, timestamp)
}

pub fn ranges_svg(analysis: &Analysis, timestamp: Option<u64>) -> String {
    let groups: Vec<(String, Vec<(String, f64)>)> = analysis
        .ranges
        .bins
        .iter()
        .map(|b| {
            let label = match b.map {
                Some(_) => b.label.clone(),
                None => format!("{} (n/a)", b.label),
            };
            (label, weight_bars(b.weights.as_ref()))
        })
        .collect();
    render_bar_chart(
        "Error weights by temporal range (dAP@50)",
        &groups,
        timestamp,
    )
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

/// Plain-text summary; every number also appears in `summary.json`.
pub fn terminal_table(analysis: &Analysis) -> String {
    let eval = &analysis.global.eval;
    let mut s = String::new();
    writeln!(s, "{:<18}{:>10}", "metric", "value").unwrap();
    writeln!(s, "{:<18}{:>10}", "mAP", fmt_opt(eval.map)).unwrap();
    writeln!(s, "{:<18}{:>10}", "AP@50", fmt_opt(eval.ap50)).unwrap();
    writeln!(s, "{:<18}{:>10}", "AP@75", fmt_opt(eval.ap75)).unwrap();
    for (&k, &v) in eval.recall_tiers.iter().zip(&eval.ar) {
        writeln!(s, "{:<18}{:>10}", tier_label(k), fmt_opt(v)).unwrap();
    }
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:<18}{:>6}{:>10}{:>10}",
        "category", "n_gt", "mAP", "AP@50"
    )
    .unwrap();
    for c in &eval.categories {
        writeln!(
            s,
            "{:<18}{:>6}{:>10}{:>10}",
            c.name,
            c.n_gt,
            fmt_opt(c.mean_ap()),
            fmt_opt(c.ap50)
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "{:<18}{:>6}{:>10}", "error", "count", "dAP@50").unwrap();
    let w = analysis.global.weights.as_ref();
    for k in ErrorKind::ALL {
        writeln!(
            s,
            "{:<18}{:>6}{:>10}",
            k.name(),
            analysis.global.errors.get(k),
            fmt_opt(w.map(|w| w.weight(k)))
        )
        .unwrap();
    }
    writeln!(
        s,
        "{:<18}{:>16}",
        "fix-all AP@50",
        fmt_opt(w.map(|w| w.fix_all_ap50))
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(s, "{:<18}{:>6}{:>10}", "range", "n_gt", "mAP").unwrap();
    for b in &analysis.ranges.bins {
        writeln!(s, "{:<18}{:>6}{:>10}", b.label, b.n_gt, fmt_opt(b.map)).unwrap();
    }
    s
}

/// All report files, in memory, so nothing is written unless everything succeeded.
pub fn build_bundle(
    evaluator: &Evaluator,
    analysis: &Analysis,
    manifest: &Manifest,
    formats: Formats,
    timestamp: Option<u64>,
) -> Vec<(String, String)> {
    let mut files = Vec::new();
    if formats.json {
        files.push((
            "summary.json".into(),
            to_json_string(&summary_json(analysis, manifest)),
        ));
        files.push((
            "errors.jsonl".into(),
            records_to_jsonl(evaluator, &analysis.global.records),
        ));
        files.push((
            "weights.json".into(),
            to_json_string(&weights_json(analysis, manifest)),
        ));
        files.push((
            "ranges.json".into(),
            to_json_string(&ranges_json(analysis, manifest)),
        ));
    }
    if formats.csv {
        files.push(("metrics.csv".into(), metrics_csv(analysis)));
    }
    if formats.svg {
        files.push(("weights.svg".into(), weights_svg(analysis, timestamp)));
        files.push(("ranges.svg".into(), ranges_svg(analysis, timestamp)));
    }
    files
}

/// Writes each file under a temporary name first and renames once all writes succeeded.
pub fn write_files(dir: &Path, files: &[(String, String)]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::new();
    for (name, content) in files {
        let tmp = dir.join(format!(".{name}.partial"));
        if let Err(e) = fs::write(&tmp, content) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        staged.push(tmp);
    }
    for ((name, _), tmp) in files.iter().zip(&staged) {
        fs::rename(tmp, dir.join(name))?;
    }
    Ok(())
}
