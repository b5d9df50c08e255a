//! The experiment matrix: modes x volatility levels x seeds, one directory
//! per cell, resumable through a manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;

use pepper_core::envlab::EnvConfig;
use pepper_core::metrics::{
    belief_variance_profile, divergence_distribution, divergence_from_first, empirical_ceiling, kmeans, pca2,
    preference_entropy_curve, reward_likelihood_curve, write_clusters_csv, write_pairwise_csv, write_pca_csv, KMeans,
};
use pepper_core::pepper::{learn_preferences, write_episode_csv, RunLog};
use pepper_core::preferences::write_history_csv;
use pepper_core::rng::{derive_seed, seeded};
use pepper_core::{EpisodeLog, Error, PreferenceMode, VolatilitySchedule, N_REWARD};

use crate::config::ExperimentConfig;
use crate::pretrain::Pretrained;

pub const MANIFEST: &str = "manifest.csv";
pub const RUNS_DIR: &str = "runs";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub mode: PreferenceMode,
    pub volatility: u32,
    pub seed_index: usize,
}

fn mode_lane(mode: PreferenceMode) -> u64 {
    PreferenceMode::ALL.iter().position(|&m| m == mode).expect("mode is listed") as u64
}

impl Cell {
    /// Derived from the master seed and the cell coordinates only, so a cell
    /// reproduces regardless of which other cells run.
    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(
            derive_seed(derive_seed(master, mode_lane(self.mode)), self.volatility as u64),
            self.seed_index as u64,
        )
    }

    pub fn id(&self) -> String {
        format!("{}/v{:03}/s{:03}", self.mode.name(), self.volatility, self.seed_index)
    }

    pub fn parse_id(id: &str) -> Option<Cell> {
        let mut parts = id.split('/');
        let mode = PreferenceMode::from_name(parts.next()?)?;
        let volatility = parts.next()?.strip_prefix('v')?.parse().ok()?;
        let seed_index = parts.next()?.strip_prefix('s')?.parse().ok()?;
        if parts.next().is_some() {
            return None;
        }
        Some(Cell {
            mode,
            volatility,
            seed_index,
        })
    }

    pub fn dir(&self, out: &Path) -> PathBuf {
        out.join(RUNS_DIR).join(self.id())
    }
}

/// Restricts the configured matrix.
#[derive(Clone, Debug, Default)]
pub struct CellFilter {
    pub mode: Option<PreferenceMode>,
    pub volatility: Option<u32>,
}

pub fn cells(config: &ExperimentConfig, filter: &CellFilter) -> Vec<Cell> {
    let mut out = Vec::new();
    for &mode in &config.pepper.modes {
        for &volatility in &config.matrix.volatility {
            for seed_index in 0..config.matrix.seeds {
                out.push(Cell {
                    mode,
                    volatility,
                    seed_index,
                });
            }
        }
    }
    out.retain(|c| filter.mode.is_none_or(|m| m == c.mode) && filter.volatility.is_none_or(|v| v == c.volatility));
    out
}

pub fn env_config(config: &ExperimentConfig, volatility: u32) -> pepper_core::Result<EnvConfig> {
    Ok(EnvConfig {
        map: config.map_params(),
        schedule: VolatilitySchedule::from_percent(volatility)?,
        start: (0, 0),
    })
}

pub fn run_cell_log(config: &ExperimentConfig, pretrained: &Pretrained, cell: Cell) -> anyhow::Result<RunLog> {
    let agent = pretrained.agent(config.encoding());
    let run = learn_preferences(
        &agent,
        env_config(config, cell.volatility)?,
        &config.pepper_config(cell.mode),
        cell.seed(config.matrix.master_seed),
    )?;
    Ok(run)
}

fn csv_file(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(csv_file(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-run metric files written next to the raw logs.
pub fn write_run_metrics(dir: &Path, run: &RunLog, config: &ExperimentConfig, cell: Cell) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    if run.episodes.len() >= 2 {
        let pairwise = divergence_distribution(run)?;
        write_pairwise_csv(csv_file(&dir.join("hausdorff.csv"))?, &pairwise, run.episodes.len())?;
        let trajectories: Vec<_> = run.episodes.iter().map(EpisodeLog::positions).collect();
        let first = divergence_from_first(&trajectories)?;
        write_rows(
            &dir.join("hausdorff_first.csv"),
            &["episode", "hausdorff"],
            first.values.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]),
        )?;
    }
    write_rows(
        &dir.join("entropy.csv"),
        &["episode", "entropy"],
        preference_entropy_curve(run)
            .iter()
            .enumerate()
            .map(|(i, h)| vec![i.to_string(), h.to_string()]),
    )?;
    write_rows(
        &dir.join("variance.csv"),
        &["episode", "posterior", "prior"],
        belief_variance_profile(run)
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i + 1).to_string(), v.posterior.to_string(), v.prior.to_string()]),
    )?;
    if cell.mode == PreferenceMode::RewardPref {
        let curve = reward_likelihood_curve(run)?;
        let rows = run
            .episodes
            .iter()
            .zip(curve)
            .map(|(ep, ll)| {
                let ceiling = empirical_ceiling(&ep.reward_categories(), N_REWARD)?;
                Ok(vec![(ep.episode_index + 1).to_string(), ll.to_string(), ceiling.to_string()])
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        write_rows(&dir.join("likelihood.csv"), &["episode", "mean_log_likelihood", "ceiling"], rows)?;
    }

    let mut labels = Vec::new();
    let mut points = Vec::new();
    for ep in &run.episodes {
        for r in ep.records() {
            labels.push((ep.episode_index + 1, r.step_index));
            points.push(r.posterior.probs().to_vec());
        }
    }
    match pca2(&points) {
        Ok(pca) => {
            let planar: Vec<Vec<f64>> = pca.projected.iter().map(|p| p.to_vec()).collect();
            let mut rng = seeded(derive_seed(cell.seed(config.matrix.master_seed), 2));
            let clusters = match kmeans(&planar, config.analysis.clusters, &mut rng, config.analysis.kmeans_iters) {
                Ok(k) => Some(k),
                Err(Error::TooFewDistinct { distinct, .. }) if distinct > 0 => {
                    Some(kmeans(&planar, distinct, &mut rng, config.analysis.kmeans_iters)?)
                }
                Err(e) => return Err(e.into()),
            };
            write_pca_csv(csv_file(&dir.join("pca.csv"))?, &labels, &pca, clusters.as_ref())?;
            write_clusters_csv(csv_file(&dir.join("clusters.csv"))?, clusters.as_ref().expect("set above"))?;
        }
        Err(Error::RankZero) | Err(Error::Dimension { .. }) => {
            write_rows(&dir.join("pca.csv"), &["episode", "step", "pc1", "pc2", "cluster"], [])?;
            write_clusters_csv(
                csv_file(&dir.join("clusters.csv"))?,
                &KMeans {
                    centroids: Vec::new(),
                    assignments: Vec::new(),
                    inertia: 0.0,
                    history: Vec::new(),
                    converged: true,
                },
            )?;
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

/// Writes a finished run to `dir` (replacing any previous content).
pub fn write_run(dir: &Path, run: &RunLog, config: &ExperimentConfig, cell: Cell) -> anyhow::Result<()> {
    let episodes = dir.join("episodes");
    fs::create_dir_all(&episodes)?;
    for ep in &run.episodes {
        write_episode_csv(csv_file(&episodes.join(format!("e{:03}.csv", ep.episode_index + 1)))?, ep)?;
    }
    write_history_csv(csv_file(&dir.join("preferences.csv"))?, &run.snapshots)?;
    let mut snapshot = format!(
        "# cell = {}\n# cell_seed = {}\n",
        cell.id(),
        cell.seed(config.matrix.master_seed)
    );
    snapshot.push_str(&config.dump());
    fs::write(dir.join("config.snapshot"), snapshot)?;
    write_run_metrics(&dir.join("metrics"), run, config, cell)
}

pub fn run_cell(config: &ExperimentConfig, pretrained: &Pretrained, cell: Cell, out: &Path) -> anyhow::Result<()> {
    let run = run_cell_log(config, pretrained, cell)?;
    let dir = cell.dir(out);
    let staging = dir.with_extension("partial");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    write_run(&staging, &run, config, cell)?;
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::rename(&staging, &dir)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CellStatus {
    Done,
    Failed(String),
}

pub fn read_manifest(out: &Path) -> anyhow::Result<BTreeMap<Cell, CellStatus>> {
    let path = out.join(MANIFEST);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    parse_manifest(&fs::read_to_string(&path)?)
}

pub fn parse_manifest(text: &str) -> anyhow::Result<BTreeMap<Cell, CellStatus>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let cell = rec
            .get(0)
            .and_then(Cell::parse_id)
            .with_context(|| format!("manifest line {line}: bad cell id"))?;
        let status = match rec.get(1) {
            Some("done") => CellStatus::Done,
            Some("failed") => CellStatus::Failed(rec.get(2).unwrap_or("").to_string()),
            _ => anyhow::bail!("manifest line {line}: bad status"),
        };
        out.insert(cell, status);
    }
    Ok(out)
}

pub fn write_manifest(out: &Path, entries: &BTreeMap<Cell, CellStatus>) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(csv_file(&out.join(MANIFEST))?);
    w.write_record(["cell", "status", "error"])?;
    for (cell, status) in entries {
        match status {
            CellStatus::Done => w.write_record([cell.id().as_str(), "done", ""])?,
            CellStatus::Failed(msg) => w.write_record([cell.id().as_str(), "failed", msg.as_str()])?,
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatrixOutcome {
    pub ran: Vec<Cell>,
    pub skipped: Vec<Cell>,
    pub failed: Vec<(Cell, String)>,
}

/// Runs every selected cell not already marked done, `jobs` at a time.
pub fn run_matrix(
    config: &ExperimentConfig,
    pretrained: &Pretrained,
    out: &Path,
    filter: &CellFilter,
    jobs: usize,
) -> anyhow::Result<MatrixOutcome> {
    fs::create_dir_all(out.join(RUNS_DIR))?;
    let mut manifest = read_manifest(out)?;
    let (todo, skipped): (Vec<Cell>, Vec<Cell>) = cells(config, filter)
        .into_iter()
        .partition(|c| !(manifest.get(c) == Some(&CellStatus::Done) && c.dir(out).exists()));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Vec<(Cell, anyhow::Result<()>)> = pool.install(|| {
        todo.par_iter()
            .map(|&cell| (cell, run_cell(config, pretrained, cell, out)))
            .collect()
    });
    let mut outcome = MatrixOutcome {
        skipped,
        ..Default::default()
    };
    for (cell, result) in results {
        match result {
            Ok(()) => {
                manifest.insert(cell, CellStatus::Done);
                outcome.ran.push(cell);
            }
            Err(e) => {
                let msg = format!("{e:#}");
                manifest.insert(cell, CellStatus::Failed(msg.clone()));
                outcome.failed.push((cell, msg));
            }
        }
    }
    write_manifest(out, &manifest)?;
    Ok(outcome)
}
