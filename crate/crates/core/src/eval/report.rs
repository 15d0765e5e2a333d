//! Report files and console rendering.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::eval::experiment::{ExperimentReport, Measure, Population};
use crate::eval::metrics::MeanStd;
use crate::fsutil::write_atomic;
use crate::train::Method;

pub const REPORT_JSON: &str = "report.json";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const AUROC_CSV: &str = "auroc.csv";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn accuracy_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("subject,method,within_acc,cross_acc\n");
    for c in &report.cells {
        let acc = |p| c.population(p).map(|r| r.accuracy);
        let _ = writeln!(
            s,
            "{},{},{},{}",
            c.subject,
            c.method,
            opt(acc(Population::Within)),
            opt(acc(Population::Cross))
        );
    }
    s
}

/// One row per applicable (subject, method, measure, population); undefined
/// values leave the `auroc` field empty.
pub fn auroc_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("subject,method,measure,population,auroc\n");
    for c in &report.cells {
        for &m in Measure::applicable(c.method) {
            for p in Population::ALL {
                let v = c.population(p).and_then(|r| r.auroc_of(m));
                let _ = writeln!(s, "{},{},{},{},{}", c.subject, c.method, m, p.name(), opt(v));
            }
        }
    }
    s
}

pub fn to_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(text)?)
}

/// Writes `report.json`, `accuracy.csv` and `auroc.csv` into `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    write_atomic(&dir.join(REPORT_JSON), to_json(report)?.as_bytes())?;
    write_atomic(&dir.join(ACCURACY_CSV), accuracy_csv(report).as_bytes())?;
    write_atomic(&dir.join(AUROC_CSV), auroc_csv(report).as_bytes())
}

/// `"73.05 ± 2.22"` for fractions, `"-"` when missing.
pub fn format_cell(v: Option<&MeanStd>) -> String {
    match v {
        Some(m) => format!("{:.2} ± {:.2}", m.mean * 100.0, m.std * 100.0),
        None => "-".into(),
    }
}

fn table(out: &mut String, title: &str, header: &[&str], rows: &[(String, Vec<String>)]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for (name, cells) in rows {
        widths[0] = widths[0].max(name.chars().count());
        for (i, c) in cells.iter().enumerate() {
            widths[i + 1] = widths[i + 1].max(c.chars().count());
        }
    }
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
    let _ = writeln!(out, "{title}");
    let line: Vec<String> = header.iter().zip(&widths).map(|(h, &w)| pad(h, w)).collect();
    let _ = writeln!(out, "{}", line.join(" | "));
    let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    for (name, cells) in rows {
        let mut line = vec![pad(name, widths[0])];
        line.extend(cells.iter().enumerate().map(|(i, c)| pad(c, widths[i + 1])));
        let _ = writeln!(out, "{}", line.join(" | "));
    }
    out.push('\n');
}

/// Accuracy and AUROC tables over methods, values shown x100.
pub fn render_tables(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let rows: Vec<(String, Vec<String>)> = report
        .aggregates
        .iter()
        .map(|a| {
            (
                a.method.to_string(),
                vec![format_cell(a.within_accuracy.as_ref()), format_cell(a.cross_accuracy.as_ref())],
            )
        })
        .collect();
    table(&mut out, "Accuracy", &["method", "within-population", "cross-population"], &rows);

    // DUQ's single score shares the first column with predictive entropy.
    let columns = [
        [Measure::PredictiveEntropy, Measure::Uncertainty],
        [Measure::ExpectedEntropy, Measure::ExpectedEntropy],
        [Measure::MutualInformation, Measure::MutualInformation],
    ];
    for pop in Population::ALL {
        let rows: Vec<(String, Vec<String>)> = report
            .aggregates
            .iter()
            .map(|a| {
                let cells = columns
                    .iter()
                    .map(|col| {
                        let v = a
                            .auroc
                            .iter()
                            .find(|x| x.population == pop && col.contains(&x.measure))
                            .and_then(|x| x.value.as_ref());
                        format_cell(v)
                    })
                    .collect();
                (a.method.to_string(), cells)
            })
            .collect();
        let title = match pop {
            Population::Within => "Uncertainty AUROC, within-population",
            Population::Cross => "Uncertainty AUROC, cross-population",
        };
        table(&mut out, title, &["method", "PE / uncertainty", "EE", "MI"], &rows);
    }
    let failed = report.failed_cells();
    if failed > 0 {
        let _ = writeln!(out, "{failed} cell(s) failed");
    }
    out
}

/// Subject-averaged rejection curve per method.
pub fn mean_rejection_curves(report: &ExperimentReport, pop: Population) -> Vec<(Method, Vec<(f64, f64)>)> {
    let mut out = Vec::new();
    for &method in &report.methods {
        let curves: Vec<_> = report
            .cells
            .iter()
            .filter(|c| c.method == method)
            .filter_map(|c| c.population(pop))
            .map(|r| &r.rejection)
            .filter(|r| !r.is_empty())
            .collect();
        let Some(first) = curves.first() else { continue };
        let points = (0..first.len())
            .map(|i| {
                let acc = curves.iter().map(|c| c[i].accuracy).sum::<f64>() / curves.len() as f64;
                (first[i].coverage, acc)
            })
            .collect();
        out.push((method, points));
    }
    out
}

const PALETTE: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

/// Accuracy-coverage curves for one population as a standalone SVG document.
pub fn rejection_svg(report: &ExperimentReport, pop: Population) -> String {
    let (w, h, m) = (640.0, 420.0, 50.0);
    let x = |c: f64| m + c * (w - 2.0 * m);
    let y = |a: f64| h - m - a * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect width="{w}" height="{h}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">Accuracy vs coverage ({}-population)</text>
<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#,
        w / 2.0,
        pop.name(),
        h - m,
        w - m,
        h - m,
        h - m
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{t:.2}</text>
<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{t:.2}</text>"#,
            x(t),
            h - m + 16.0,
            m - 6.0,
            y(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">coverage</text>"#,
        w / 2.0,
        h - 12.0
    );
    for (i, (method, pts)) in mean_rejection_curves(report, pop).iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(c, a)| format!("{:.2},{:.2}", x(c), y(a))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>
<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{colour}">{method}</text>"#,
            path.join(" "),
            w - m - 90.0,
            m + 14.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `rejection_within.svg` and `rejection_cross.svg` into `dir`.
pub fn write_rejection_svgs(dir: &Path, report: &ExperimentReport) -> Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    for pop in Population::ALL {
        let p = dir.join(format!("rejection_{}.svg", pop.name()));
        write_atomic(&p, rejection_svg(report, pop).as_bytes())?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_formatting() {
        let m = MeanStd { mean: 0.7305, std: 0.0222, n: 9, single: false };
        assert_eq!(format_cell(Some(&m)), "73.05 ± 2.22");
        assert_eq!(format_cell(None), "-");
    }
}
