//! Behavioural summaries of runs: trajectory divergence, belief projections,
//! clustering and preference curves.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dist::Belief;
use crate::pepper::{EpisodeLog, RunLog};
use crate::{Error, Result};

pub type GridPoint = (usize, usize);

fn sq_dist(a: GridPoint, b: GridPoint) -> usize {
    let dr = a.0.abs_diff(b.0);
    let dc = a.1.abs_diff(b.1);
    dr * dr + dc * dc
}

fn directed_sq(from: &[GridPoint], to: &[GridPoint]) -> usize {
    from.iter()
        .map(|&x| to.iter().map(|&y| sq_dist(x, y)).min().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

/// Symmetric Hausdorff distance between two position sequences.
pub fn hausdorff(a: &[GridPoint], b: &[GridPoint]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    Ok((directed_sq(a, b).max(directed_sq(b, a)) as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub values: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

impl Divergence {
    fn from_values(values: Vec<f64>) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Divergence { values, mean, median }
    }
}

/// Hausdorff over every unordered pair, in `(0,1), (0,2), ..., (1,2), ...`
/// order.
pub fn pairwise_divergence(trajectories: &[Vec<GridPoint>]) -> Result<Divergence> {
    if trajectories.len() < 2 {
        return Err(Error::Empty("episode pairs"));
    }
    let mut values = Vec::with_capacity(trajectories.len() * (trajectories.len() - 1) / 2);
    for i in 0..trajectories.len() {
        for j in i + 1..trajectories.len() {
            values.push(hausdorff(&trajectories[i], &trajectories[j])?);
        }
    }
    Ok(Divergence::from_values(values))
}

/// Hausdorff of every later episode against the first one.
pub fn divergence_from_first(trajectories: &[Vec<GridPoint>]) -> Result<Divergence> {
    if trajectories.len() < 2 {
        return Err(Error::Empty("episode pairs"));
    }
    let values = trajectories[1..]
        .iter()
        .map(|t| hausdorff(&trajectories[0], t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Divergence::from_values(values))
}

pub fn divergence_distribution(run: &RunLog) -> Result<Divergence> {
    let trajectories: Vec<_> = run.episodes.iter().map(EpisodeLog::positions).collect();
    pairwise_divergence(&trajectories)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub projected: Vec<[f64; 2]>,
    /// Share of total variance carried by each component.
    pub explained: [f64; 2],
}

impl Pca2 {
    pub fn project(&self, point: &[f64]) -> [f64; 2] {
        let centered: Vec<f64> = point.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        let dot = |c: &[f64]| c.iter().zip(&centered).map(|(a, b)| a * b).sum();
        [dot(&self.components[0]), dot(&self.components[1])]
    }
}

/// Variance below this fraction of the largest coordinate scale counts as zero.
const RANK_TOL: f64 = 1e-12;

/// Top-two principal components of `points` (rows).
pub fn pca2(points: &[Vec<f64>]) -> Result<Pca2> {
    if points.len() < 3 {
        return Err(Error::Dimension {
            what: "pca points",
            expected: 3,
            found: points.len(),
        });
    }
    let dim = points[0].len();
    if dim < 2 {
        return Err(Error::Dimension {
            what: "pca dimension",
            expected: 2,
            found: dim,
        });
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension {
            what: "pca dimension",
            expected: dim,
            found: p.len(),
        });
    }
    let n = points.len();
    let data = DMatrix::from_fn(n, dim, |r, c| points[r][c]);
    let mean: Vec<f64> = data.column_iter().map(|c| c.mean()).collect();
    let mut centered = data;
    for (c, m) in mean.iter().enumerate() {
        centered.column_mut(c).add_scalar_mut(-m);
    }
    let cov = centered.transpose() * &centered / n as f64;
    let total = cov.trace();
    let scale = cov.diagonal().amax().max(f64::MIN_POSITIVE);
    if !(total > RANK_TOL * scale) || total <= 0.0 {
        return Err(Error::RankZero);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let component = |k: usize| {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        let lead = (0..dim).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let components = [component(0), component(1)];
    let explained = [0, 1].map(|k| eig.eigenvalues[order[k]].max(0.0) / total);
    let projected = centered
        .row_iter()
        .map(|row| {
            let dot = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    Ok(Pca2 {
        mean,
        components,
        projected,
        explained,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment pass.
    pub history: Vec<f64>,
    pub converged: bool,
}

fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm seeded from `k` distinct points. Empty clusters keep
/// their previous centroid.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R, max_iters: usize) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let dim = points.first().map_or(0, Vec::len);
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension {
            what: "kmeans dimension",
            expected: dim,
            found: p.len(),
        });
    }
    let mut distinct: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if distinct.iter().all(|&j| points[j] != *p) {
            distinct.push(i);
        }
    }
    if k > distinct.len() {
        return Err(Error::TooFewDistinct {
            k,
            distinct: distinct.len(),
        });
    }
    distinct.shuffle(rng);
    let mut centroids: Vec<Vec<f64>> = distinct[..k].iter().map(|&i| points[i].clone()).collect();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        for (p, slot) in points.iter().zip(assignments.iter_mut()) {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, m)| (c, sq_euclid(p, m)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            if *slot != best {
                *slot = best;
                changed = true;
            }
            inertia += d;
        }
        history.push(inertia);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            sizes[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for ((centroid, sum), size) in centroids.iter_mut().zip(sums).zip(sizes) {
            if size > 0 {
                *centroid = sum.into_iter().map(|s| s / size as f64).collect();
            }
        }
    }
    let inertia = *history.last().unwrap_or(&0.0);
    Ok(KMeans {
        centroids,
        assignments,
        inertia,
        history,
        converged,
    })
}

/// Mean over coordinates of the across-step (population) variance.
pub fn belief_variance<'a>(beliefs: impl IntoIterator<Item = &'a Belief>) -> f64 {
    let rows: Vec<&[f64]> = beliefs.into_iter().map(|b| b.probs()).collect();
    let Some(first) = rows.first() else {
        return 0.0;
    };
    let n = rows.len() as f64;
    let dim = first.len();
    let total: f64 = (0..dim)
        .map(|c| {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n
        })
        .sum();
    total / dim as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeliefVariance {
    pub posterior: f64,
    pub prior: f64,
}

pub fn belief_variance_profile(run: &RunLog) -> Vec<BeliefVariance> {
    run.episodes
        .iter()
        .map(|ep| BeliefVariance {
            posterior: belief_variance(ep.records().map(|r| &r.posterior)),
            prior: belief_variance(ep.records().map(|r| &r.prior)),
        })
        .collect()
}

/// Entropy of the expected preference distribution for every snapshot.
pub fn preference_entropy_curve(run: &RunLog) -> Vec<f64> {
    run.snapshots.iter().map(|s| s.entropy_of_expected()).collect()
}

/// Per-episode mean predictive log-likelihood of the realized reward stream
/// under the counts held at the start of that episode.
pub fn reward_likelihood_curve(run: &RunLog) -> Result<Vec<f64>> {
    run.episodes
        .iter()
        .zip(&run.snapshots)
        .map(|(ep, counts)| counts.predictive_likelihood(&ep.reward_categories()))
        .collect()
}

/// Best achievable mean log-likelihood for a fixed categorical: the negative
/// entropy of the empirical frequencies.
pub fn empirical_ceiling(categories: &[usize], n_categories: usize) -> Result<f64> {
    if categories.is_empty() {
        return Err(Error::Empty("category sequence"));
    }
    let mut freq = vec![0.0; n_categories];
    for &c in categories {
        *freq.get_mut(c).ok_or(Error::RewardCategory(c))? += 1.0;
    }
    let n = categories.len() as f64;
    Ok(freq.iter().filter(|&&f| f > 0.0).map(|&f| f / n * (f / n).ln()).sum())
}

pub fn write_pairwise_csv<W: Write>(writer: W, divergence: &Divergence, n_episodes: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["episode_a", "episode_b", "hausdorff"])?;
    let pairs = (0..n_episodes).flat_map(|i| (i + 1..n_episodes).map(move |j| (i, j)));
    for ((i, j), v) in pairs.zip(&divergence.values) {
        w.write_record([i.to_string(), j.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pca_csv<W: Write>(writer: W, labels: &[(usize, usize)], pca: &Pca2, clusters: Option<&KMeans>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["episode", "step", "pc1", "pc2", "cluster"])?;
    for (k, ((e, s), p)) in labels.iter().zip(&pca.projected).enumerate() {
        let cluster = clusters.map_or(String::new(), |c| c.assignments[k].to_string());
        w.write_record([e.to_string(), s.to_string(), p[0].to_string(), p[1].to_string(), cluster])?;
    }
    w.flush()?;
    Ok(())
}

/// Centroids in the projected plane, one row per cluster.
pub fn write_clusters_csv<W: Write>(writer: W, clusters: &KMeans) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = clusters.centroids.first().map_or(0, Vec::len);
    let mut header = vec!["cluster".to_string(), "size".to_string()];
    header.extend((0..dim).map(|d| format!("c{d}")));
    w.write_record(&header)?;
    for (c, centroid) in clusters.centroids.iter().enumerate() {
        let size = clusters.assignments.iter().filter(|&&a| a == c).count();
        let mut row = vec![c.to_string(), size.to_string()];
        row.extend(centroid.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
