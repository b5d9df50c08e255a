//! Dirichlet pseudo-count stores used as learnt prior preferences over reward
//! categories or latent states.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::digamma;

use crate::dist::{entropy, Categorical};
use crate::{Error, Result};

/// Episodes retained by a sliding preference window unless configured.
pub const DEFAULT_WINDOW: usize = 5;

/// Strictly positive Dirichlet concentration parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletCounts {
    counts: Vec<f64>,
}

impl DirichletCounts {
    pub fn new(counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Empty("dirichlet counts"));
        }
        if let Some(c) = counts.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidParameter(format!("count {c} is not strictly positive")));
        }
        Ok(DirichletCounts { counts })
    }

    /// All-ones counts: uniform preferences.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "empty preference support");
        DirichletCounts { counts: vec![1.0; n] }
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Mean of the Dirichlet: `counts / sum(counts)`.
    pub fn expected_categorical(&self) -> Categorical {
        let total = self.total();
        Categorical::from_normalized(self.counts.iter().map(|c| c / total).collect())
    }

    /// `E[ln p_i] = digamma(counts_i) - digamma(sum)`.
    pub fn expected_log(&self) -> Vec<f64> {
        let psi_total = digamma(self.total());
        self.counts.iter().map(|&c| digamma(c) - psi_total).collect()
    }

    /// One draw from `Dir(counts)` via normalised `Gamma(counts_i, 1)` draws.
    pub fn thompson_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Categorical {
        let mut draws: Vec<f64> = self
            .counts
            .iter()
            .map(|&c| {
                let g = Gamma::new(c, 1.0).expect("counts are positive and finite");
                g.sample(rng).max(f64::MIN_POSITIVE)
            })
            .collect();
        let total: f64 = draws.iter().sum();
        draws.iter_mut().for_each(|d| *d /= total);
        Categorical::from_normalized(draws)
    }

    /// `counts += alpha * weights`.
    pub fn accumulate(&mut self, weights: &[f64], alpha: f64) -> Result<()> {
        check_delta(weights, self.len())?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {alpha} must be non-negative")));
        }
        for (c, w) in self.counts.iter_mut().zip(weights) {
            *c += alpha * w;
        }
        Ok(())
    }

    /// Adds `alpha` to a single category.
    pub fn accumulate_category(&mut self, category: usize, alpha: f64) -> Result<()> {
        if category >= self.len() {
            return Err(Error::Dimension {
                what: "preference category",
                expected: self.len(),
                found: category,
            });
        }
        let mut onehot = vec![0.0; self.len()];
        onehot[category] = 1.0;
        self.accumulate(&onehot, alpha)
    }

    /// Entropy in nats of [`DirichletCounts::expected_categorical`].
    pub fn entropy_of_expected(&self) -> f64 {
        entropy(self.expected_categorical().probs())
    }

    /// Mean log-probability of `categories` under the expected categorical,
    /// with the counts held fixed.
    pub fn predictive_likelihood(&self, categories: &[usize]) -> Result<f64> {
        Ok(self.predictive_log_likelihood(categories)? / categories.len() as f64)
    }

    /// Summed log-probability of `categories` (log of the episode product).
    pub fn predictive_log_likelihood(&self, categories: &[usize]) -> Result<f64> {
        if categories.is_empty() {
            return Err(Error::Empty("category sequence"));
        }
        let total = self.total();
        categories
            .iter()
            .map(|&k| {
                self.counts.get(k).map(|c| (c / total).ln()).ok_or(Error::Dimension {
                    what: "preference category",
                    expected: self.len(),
                    found: k,
                })
            })
            .sum()
    }
}

fn check_delta(delta: &[f64], n: usize) -> Result<()> {
    if delta.len() != n {
        return Err(Error::Dimension {
            what: "preference increment",
            expected: n,
            found: delta.len(),
        });
    }
    if let Some(&w) = delta.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::NegativeWeight(w));
    }
    Ok(())
}

/// Ring buffer of per-episode count increments; the effective counts are the
/// base plus the retained increments.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceWindow {
    capacity: usize,
    deltas: VecDeque<Vec<f64>>,
}

impl PreferenceWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("window capacity must be at least 1".into()));
        }
        Ok(PreferenceWindow {
            capacity,
            deltas: VecDeque::with_capacity(capacity + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn deltas(&self) -> impl Iterator<Item = &[f64]> {
        self.deltas.iter().map(Vec::as_slice)
    }

    /// Pushes an episode increment, returning the evicted one if the window
    /// was full.
    pub fn push(&mut self, delta: Vec<f64>) -> Result<Option<Vec<f64>>> {
        if let Some(first) = self.deltas.front() {
            check_delta(&delta, first.len())?;
        } else {
            check_delta(&delta, delta.len())?;
        }
        self.deltas.push_back(delta);
        Ok(if self.deltas.len() > self.capacity {
            self.deltas.pop_front()
        } else {
            None
        })
    }

    /// `base + sum(retained increments)`.
    pub fn counts(&self, base: &DirichletCounts) -> Result<DirichletCounts> {
        let mut counts = base.clone();
        for d in &self.deltas {
            counts.accumulate(d, 1.0)?;
        }
        Ok(counts)
    }
}

/// Pushes `delta` into the window and returns the resulting counts.
pub fn apply_window(window: &mut PreferenceWindow, base: &DirichletCounts, delta: Vec<f64>) -> Result<DirichletCounts> {
    check_delta(&delta, base.len())?;
    window.push(delta)?;
    window.counts(base)
}

/// Writes one row per snapshot: `episode,c0,c1,...`.
pub fn write_history_csv<W: Write>(writer: W, snapshots: &[DirichletCounts]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = snapshots.first().map_or(0, DirichletCounts::len);
    let mut header = vec!["episode".to_string()];
    header.extend((0..n).map(|i| format!("c{i}")));
    w.write_record(&header)?;
    for (e, snap) in snapshots.iter().enumerate() {
        if snap.len() != n {
            return Err(Error::Dimension {
                what: "preference snapshot",
                expected: n,
                found: snap.len(),
            });
        }
        let mut row = vec![e.to_string()];
        row.extend(snap.counts().iter().map(|c| format!("{c:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_history_csv`].
pub fn read_history_csv<R: Read>(reader: R) -> Result<Vec<DirichletCounts>> {
    let mut r = csv::Reader::from_reader(reader);
    let n = r.headers()?.len().checked_sub(1).ok_or_else(|| Error::parse(1, "missing episode column"))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != n + 1 {
            return Err(Error::parse(line, format!("expected {} fields", n + 1)));
        }
        let episode: usize = rec[0].parse().map_err(|_| Error::parse(line, "bad episode index"))?;
        if episode != i {
            return Err(Error::parse(line, "episodes must be consecutive from 0"));
        }
        let counts = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse(line, format!("bad count {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(DirichletCounts::new(counts).map_err(|e| Error::parse(line, e.to_string()))?);
    }
    Ok(out)
}
