//! Deterministic SVG rendering of the merged analysis tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analyze::{Table, ANALYSIS_DIR};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

/// One line: mean across seeds with a min/max band.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Groups `(group, seed, x, y)` rows into per-group series over x.
pub fn series_from_rows(rows: impl IntoIterator<Item = (String, f64, f64)>) -> Vec<Series> {
    let mut groups: BTreeMap<String, BTreeMap<i64, Vec<f64>>> = BTreeMap::new();
    for (label, x, y) in rows {
        groups
            .entry(label)
            .or_default()
            .entry((x * 1e6).round() as i64)
            .or_default()
            .push(y);
    }
    groups
        .into_iter()
        .map(|(label, points)| {
            let mut s = Series {
                label,
                x: Vec::new(),
                mean: Vec::new(),
                min: Vec::new(),
                max: Vec::new(),
            };
            for (x, ys) in points {
                s.x.push(x as f64 / 1e6);
                s.mean.push(ys.iter().sum::<f64>() / ys.len() as f64);
                s.min.push(ys.iter().copied().fold(f64::INFINITY, f64::min));
                s.max.push(ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
            s
        })
        .collect()
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let (mut x0, mut x1) = bounds(xs);
        let (mut y0, mut y1) = bounds(ys);
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_Y - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN_Y)
    }
}

fn bounds(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    xs.filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        MARGIN_LEFT,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (left, right) = (f.px(f.x0), f.px(f.x1));
    let (bottom, top) = (f.py(f.y0), f.py(f.y1));
    let _ = writeln!(
        out,
        "<path d=\"M{left:.3},{top:.3} L{left:.3},{bottom:.3} L{right:.3},{bottom:.3}\" stroke=\"black\" fill=\"none\"/>"
    );
    for k in 0..=2 {
        let y = f.y0 + (f.y1 - f.y0) * k as f64 / 2.0;
        let _ = writeln!(
            out,
            "<text class=\"ytick\" x=\"{:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{y:.4}</text>",
            left - 6.0,
            f.py(y) + 4.0
        );
    }
    for k in 0..=2 {
        let x = f.x0 + (f.x1 - f.x0) * k as f64 / 2.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x:.1}</text>",
            f.px(x),
            bottom + 16.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        (left + right) / 2.0,
        HEIGHT - 6.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {:.3})\" text-anchor=\"middle\">{}</text>",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, k: usize, label: &str) {
    let y = MARGIN_Y + 16.0 * k as f64;
    let x = WIDTH - MARGIN_RIGHT + 12.0;
    let colour = PALETTE[k % PALETTE.len()];
    let _ = writeln!(
        out,
        "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{colour}\"/><text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
        y - 9.0,
        x + 14.0,
        y,
        escape(label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn points(f: &Frame, xs: &[f64], ys: &[f64]) -> String {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.3},{:.3}", f.px(x), f.py(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Mean lines over min/max bands.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::new(
        series.iter().flat_map(|s| s.x.iter().copied()),
        series.iter().flat_map(|s| s.min.iter().chain(&s.max).copied()),
    );
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut band_x = s.x.clone();
        band_x.extend(s.x.iter().rev());
        let mut band_y = s.max.clone();
        band_y.extend(s.min.iter().rev());
        let _ = writeln!(
            out,
            "<polygon class=\"band\" points=\"{}\" fill=\"{colour}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
            points(&frame, &band_x, &band_y)
        );
        let _ = writeln!(
            out,
            "<polyline class=\"mean\" points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\"/>",
            points(&frame, &s.x, &s.mean)
        );
        legend(&mut out, k, &s.label);
    }
    out.push_str("</svg>\n");
    out
}

fn kde(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let bw = 1.06 * sd * n.powf(-0.2);
    if bw <= 1e-12 {
        return vec![0.0; grid.len()];
    }
    grid.iter()
        .map(|&g| values.iter().map(|v| (-0.5 * ((g - v) / bw).powi(2)).exp()).sum::<f64>() / (n * bw))
        .collect()
}

/// Violins of value distributions, one per group.
pub fn violin_chart(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let frame = Frame::new(
        (0..=groups.len()).map(|i| i as f64),
        groups.iter().flat_map(|(_, v)| v.iter().copied()),
    );
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, "condition", y_label);
    let slot = (frame.px(1.0) - frame.px(0.0)) * 0.45;
    for (k, (label, values)) in groups.iter().enumerate() {
        if values.is_empty() {
            continue;
        }
        let colour = PALETTE[k % PALETTE.len()];
        let centre = frame.px(k as f64 + 0.5);
        let (lo, hi) = bounds(values.iter().copied());
        let grid: Vec<f64> = (0..=40).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect();
        let density = kde(values, &grid);
        let peak = density.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            let mut pts: Vec<String> = grid
                .iter()
                .zip(&density)
                .map(|(&y, &d)| format!("{:.3},{:.3}", centre + slot * d / peak, frame.py(y)))
                .collect();
            pts.extend(
                grid.iter()
                    .zip(&density)
                    .rev()
                    .map(|(&y, &d)| format!("{:.3},{:.3}", centre - slot * d / peak, frame.py(y))),
            );
            let _ = writeln!(
                out,
                "<polygon class=\"violin\" points=\"{}\" fill=\"{colour}\" fill-opacity=\"0.5\" stroke=\"{colour}\"/>",
                pts.join(" ")
            );
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            0.5 * (sorted[m - 1] + sorted[m])
        } else {
            sorted[m]
        };
        let _ = writeln!(
            out,
            "<line class=\"median\" x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"black\"/>",
            centre - slot * 0.5,
            frame.py(median),
            centre + slot * 0.5,
            frame.py(median)
        );
        legend(&mut out, k, label);
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotReport {
    pub written: Vec<PathBuf>,
    pub missing: Vec<String>,
}

fn condition(row: &[String], mode: usize, vol: usize) -> String {
    format!("{} v{}", row[mode], row[vol])
}

fn curve_rows(t: &Table, x: &str, y: &str) -> anyhow::Result<Vec<(String, f64, f64)>> {
    let (m, v) = (t.column("mode")?, t.column("volatility")?);
    let xs = t.floats(x)?;
    let ys = t.floats(y)?;
    Ok(t.rows
        .iter()
        .zip(xs.into_iter().zip(ys))
        .map(|(r, (x, y))| (condition(r, m, v), x, y))
        .collect())
}

/// Renders every plot whose input exists under `out/analysis`.
pub fn emit_plots(out: &Path) -> anyhow::Result<PlotReport> {
    let dir = out.join(ANALYSIS_DIR);
    let mut report = PlotReport::default();
    let emit = |name: &str, svg: String, report: &mut PlotReport| -> anyhow::Result<()> {
        let path = dir.join(name);
        fs::write(&path, svg)?;
        report.written.push(path);
        Ok(())
    };

    let entropy = dir.join("entropy_curve.csv");
    if entropy.exists() {
        let t = Table::read(&entropy)?;
        let s = series_from_rows(curve_rows(&t, "episode", "entropy")?);
        emit(
            "entropy_curve.svg",
            line_chart("Preference entropy", "episode", "entropy (nats)", &s),
            &mut report,
        )?;
    } else {
        report.missing.push("entropy_curve.csv".into());
    }

    let hausdorff = dir.join("pairwise_hausdorff.csv");
    if hausdorff.exists() {
        let t = Table::read(&hausdorff)?;
        let (m, v) = (t.column("mode")?, t.column("volatility")?);
        let values = t.floats("hausdorff")?;
        let mut groups: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
        for (r, h) in t.rows.iter().zip(values) {
            let vol: u32 = r[v].parse()?;
            groups.entry((r[m].clone(), vol)).or_default().push(h);
        }
        let groups: Vec<(String, Vec<f64>)> = groups.into_iter().map(|((m, v), h)| (format!("{m} v{v}"), h)).collect();
        emit(
            "hausdorff_violin.svg",
            violin_chart("Pairwise Hausdorff divergence", "hausdorff", &groups),
            &mut report,
        )?;
    } else {
        report.missing.push("pairwise_hausdorff.csv".into());
    }

    let likelihood = dir.join("marginal_likelihood.csv");
    if likelihood.exists() {
        let t = Table::read(&likelihood)?;
        let s = series_from_rows(curve_rows(&t, "episode", "mean_log_likelihood")?);
        emit(
            "marginal_likelihood.svg",
            line_chart("Predictive log-likelihood of rewards", "episode", "mean log-likelihood", &s),
            &mut report,
        )?;
    } else {
        report.missing.push("marginal_likelihood.csv".into());
    }
    Ok(report)
}
