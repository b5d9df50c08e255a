//! Merges per-run metric files into matrix-level CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;

use crate::matrix::{read_manifest, Cell, CellStatus};

pub const ANALYSIS_DIR: &str = "analysis";

/// Matrix-level file name and the per-run metric file it concatenates.
pub const MERGED: &[(&str, &str)] = &[
    ("pairwise_hausdorff.csv", "hausdorff.csv"),
    ("hausdorff_vs_first.csv", "hausdorff_first.csv"),
    ("entropy_curve.csv", "entropy.csv"),
    ("marginal_likelihood.csv", "likelihood.csv"),
    ("belief_variance.csv", "variance.csv"),
    ("pca_projection.csv", "pca.csv"),
    ("clusters.csv", "clusters.csv"),
];

pub const SUMMARY: &str = "summary.csv";

/// Parsed table: header and rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> anyhow::Result<Table> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> anyhow::Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column `{name}`"))
    }

    pub fn floats(&self, name: &str) -> anyhow::Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().with_context(|| format!("bad `{name}` value {:?}", r[c])))
            .collect()
    }
}

fn cell_columns(cell: &Cell) -> [String; 3] {
    [
        cell.mode.name().to_string(),
        cell.volatility.to_string(),
        cell.seed_index.to_string(),
    ]
}

/// Completed cells in canonical order.
pub fn completed_cells(out: &Path) -> anyhow::Result<Vec<Cell>> {
    Ok(read_manifest(out)?
        .into_iter()
        .filter(|(c, s)| *s == CellStatus::Done && c.dir(out).exists())
        .map(|(c, _)| c)
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

/// Writes the merged tables and a per-condition summary; returns the
/// summary.
pub fn analyze(out: &Path) -> anyhow::Result<Table> {
    let cells = completed_cells(out)?;
    if cells.is_empty() {
        anyhow::bail!("no completed runs under {}", out.display());
    }
    let dir = out.join(ANALYSIS_DIR);
    fs::create_dir_all(&dir)?;
    for (merged, per_run) in MERGED {
        let mut table: Option<Table> = None;
        for cell in &cells {
            let path = cell.dir(out).join("metrics").join(per_run);
            if !path.exists() {
                continue;
            }
            let t = Table::read(&path)?;
            let target = table.get_or_insert_with(|| Table {
                header: ["mode", "volatility", "seed"]
                    .iter()
                    .map(|s| s.to_string())
                    .chain(t.header.iter().cloned())
                    .collect(),
                rows: Vec::new(),
            });
            if target.header[3..] != t.header[..] {
                anyhow::bail!("{} has an unexpected header", path.display());
            }
            for row in t.rows {
                target.rows.push(cell_columns(cell).into_iter().chain(row).collect());
            }
        }
        if let Some(t) = table {
            t.write(&dir.join(merged))?;
        }
    }

    // Per (mode, volatility): pooled pairwise divergence and entropy ends.
    let mut groups: BTreeMap<(pepper_core::PreferenceMode, u32), Vec<Cell>> = BTreeMap::new();
    for c in &cells {
        groups.entry((c.mode, c.volatility)).or_default().push(*c);
    }
    let mut summary = Table {
        header: [
            "mode",
            "volatility",
            "seeds",
            "hausdorff_mean",
            "hausdorff_median",
            "initial_entropy",
            "final_entropy",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rows: Vec::new(),
    };
    for ((mode, vol), members) in groups {
        let mut pooled = Vec::new();
        let mut first = Vec::new();
        let mut last = Vec::new();
        for c in &members {
            let metrics = c.dir(out).join("metrics");
            let h = metrics.join("hausdorff.csv");
            if h.exists() {
                pooled.extend(Table::read(&h)?.floats("hausdorff")?);
            }
            let e = Table::read(&metrics.join("entropy.csv"))?.floats("entropy")?;
            first.push(*e.first().context("empty entropy curve")?);
            last.push(*e.last().context("empty entropy curve")?);
        }
        summary.rows.push(vec![
            mode.name().to_string(),
            vol.to_string(),
            members.len().to_string(),
            mean(&pooled).to_string(),
            median(&pooled).to_string(),
            mean(&first).to_string(),
            mean(&last).to_string(),
        ]);
    }
    summary.write(&dir.join(SUMMARY))?;
    Ok(summary)
}
