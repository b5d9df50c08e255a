//! Discrete categorical generative model.
//!
//! A single categorical latent state `s` with an initial distribution, one
//! row-stochastic transition matrix per action, and two emission tables
//! conditioned on the state: observation symbols and reward categories. The
//! belief over `s` plays the role of a recurrent summary of the history, and
//! every quantity the planner needs (priors, posteriors, emission entropies,
//! parameter disagreement) is exact.

mod codec;
mod em;
mod ensemble;
mod inference;

use rand::Rng;

use crate::dist::{entropy, sample_index, Belief, Categorical, SUM_TOLERANCE};
use crate::{Error, Result};

pub use em::{dataset_log_evidence, fit_em, fit_em_from, EmOptions, EmReport};
pub use ensemble::{ensemble_disagreement, fit_ensemble, fit_ensemble_seeded, Ensemble, MemberSeed, ANCHOR_JITTER, DEFAULT_MEMBERS};
pub use inference::{elbo, filtering_posteriors, log_evidence, Trajectory};

/// Dense row-stochastic matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("matrix"));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                what: "matrix entries",
                expected: rows * cols,
                found: data.len(),
            });
        }
        for (r, row) in data.chunks(cols).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidDistribution(format!("row {r} has an invalid entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidDistribution(format!("row {r} sums to {total}")));
            }
        }
        Ok(StochasticMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidParameter("ragged matrix rows".into()));
        }
        StochasticMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        StochasticMatrix { rows: n, cols: n, data }
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        StochasticMatrix {
            rows,
            cols,
            data: vec![1.0 / cols as f64; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `weights^T M`, skipping zero weights.
    pub fn left_mul(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.left_mul_into(weights, &mut out);
        out
    }

    pub fn left_mul_into(&self, weights: &[f64], out: &mut [f64]) {
        debug_assert_eq!(weights.len(), self.rows);
        out.iter_mut().for_each(|x| *x = 0.0);
        for (w, row) in weights.iter().zip(self.data.chunks_exact(self.cols)) {
            if *w != 0.0 {
                for (o, p) in out.iter_mut().zip(row) {
                    *o += w * p;
                }
            }
        }
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &StochasticMatrix) -> StochasticMatrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut data = Vec::with_capacity(self.rows * other.cols);
        for r in 0..self.rows {
            data.extend(other.left_mul(self.row(r)));
        }
        StochasticMatrix {
            rows: self.rows,
            cols: other.cols,
            data,
        }
    }
}

/// Table dimensions of a [`WorldModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_obs: usize,
    pub n_rewards: usize,
}

#[derive(Clone, Debug)]
pub struct WorldModel {
    dims: ModelDims,
    init: Categorical,
    trans: Vec<StochasticMatrix>,
    obs: StochasticMatrix,
    rew: StochasticMatrix,
    // Derived: observation likelihood columns (obs-major) and row entropies.
    obs_columns: Vec<f64>,
    obs_entropy: Vec<f64>,
}

impl PartialEq for WorldModel {
    fn eq(&self, other: &Self) -> bool {
        self.init == other.init && self.trans == other.trans && self.obs == other.obs && self.rew == other.rew
    }
}

impl WorldModel {
    pub fn new(
        init: Categorical,
        trans: Vec<StochasticMatrix>,
        obs: StochasticMatrix,
        rew: StochasticMatrix,
    ) -> Result<Self> {
        let n_states = init.len();
        let dims = ModelDims {
            n_states,
            n_actions: trans.len(),
            n_obs: obs.cols(),
            n_rewards: rew.cols(),
        };
        if trans.is_empty() {
            return Err(Error::Empty("transition tables"));
        }
        for t in &trans {
            if t.rows() != n_states || t.cols() != n_states {
                return Err(Error::Dimension {
                    what: "transition matrix",
                    expected: n_states,
                    found: if t.rows() != n_states { t.rows() } else { t.cols() },
                });
            }
        }
        for (what, m) in [("observation rows", &obs), ("reward rows", &rew)] {
            if m.rows() != n_states {
                return Err(Error::Dimension {
                    what,
                    expected: n_states,
                    found: m.rows(),
                });
            }
        }
        let mut obs_columns = vec![0.0; dims.n_obs * n_states];
        for s in 0..n_states {
            for (o, &p) in obs.row(s).iter().enumerate() {
                obs_columns[o * n_states + s] = p;
            }
        }
        let obs_entropy = (0..n_states).map(|s| entropy(obs.row(s))).collect();
        Ok(WorldModel {
            dims,
            init,
            trans,
            obs,
            rew,
            obs_columns,
            obs_entropy,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn n_states(&self) -> usize {
        self.dims.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.dims.n_actions
    }

    pub fn n_obs(&self) -> usize {
        self.dims.n_obs
    }

    pub fn n_rewards(&self) -> usize {
        self.dims.n_rewards
    }

    pub fn init(&self) -> &Categorical {
        &self.init
    }

    pub fn trans(&self, action: usize) -> &StochasticMatrix {
        &self.trans[action]
    }

    pub fn obs(&self) -> &StochasticMatrix {
        &self.obs
    }

    pub fn rew(&self) -> &StochasticMatrix {
        &self.rew
    }

    /// Likelihood `P(o | s)` for every state.
    pub fn obs_likelihood(&self, obs: usize) -> &[f64] {
        let n = self.dims.n_states;
        &self.obs_columns[obs * n..(obs + 1) * n]
    }

    /// Entropy of each observation row.
    pub fn obs_row_entropy(&self) -> &[f64] {
        &self.obs_entropy
    }

    /// True when every table entry is strictly positive.
    pub fn is_strictly_positive(&self) -> bool {
        self.init.probs().iter().all(|p| *p > 0.0)
            && self.trans.iter().all(|t| t.data().iter().all(|p| *p > 0.0))
            && self.obs.data().iter().all(|p| *p > 0.0)
            && self.rew.data().iter().all(|p| *p > 0.0)
    }

    fn check_belief(&self, belief: &Belief) {
        assert_eq!(belief.len(), self.dims.n_states, "belief dimension");
    }

    /// One-step prior `belief^T T[action]`.
    pub fn predict_prior(&self, belief: &Belief, action: usize) -> Belief {
        self.check_belief(belief);
        let mut next = self.trans[action].left_mul(belief.probs());
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|p| *p /= total);
        Categorical::from_normalized(next)
    }

    /// Bayes update of `prior` on an observation symbol, without a transition.
    pub fn update(&self, prior: &Belief, obs: usize, reward: Option<usize>) -> Result<Belief> {
        self.check_belief(prior);
        if obs >= self.dims.n_obs {
            return Err(Error::Dimension {
                what: "observation symbol",
                expected: self.dims.n_obs,
                found: obs,
            });
        }
        let like = self.obs_likelihood(obs);
        let mut post: Vec<f64> = prior.probs().iter().zip(like).map(|(p, l)| p * l).collect();
        if let Some(r) = reward {
            if r >= self.dims.n_rewards {
                return Err(Error::RewardCategory(r));
            }
            for (s, p) in post.iter_mut().enumerate() {
                *p *= self.rew.get(s, r);
            }
        }
        let total: f64 = post.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateUpdate);
        }
        post.iter_mut().for_each(|p| *p /= total);
        Ok(Categorical::from_normalized(post))
    }

    /// Predict through `action`, then condition on the observation symbol.
    pub fn filter_posterior(&self, belief: &Belief, action: usize, obs: usize) -> Result<Belief> {
        self.update(&self.predict_prior(belief, action), obs, None)
    }

    /// As [`WorldModel::filter_posterior`], also conditioning on the reward
    /// category.
    pub fn filter_with_reward(&self, belief: &Belief, action: usize, obs: usize, reward: usize) -> Result<Belief> {
        self.update(&self.predict_prior(belief, action), obs, Some(reward))
    }

    pub fn obs_marginal(&self, belief: &Belief) -> Vec<f64> {
        self.obs.left_mul(belief.probs())
    }

    pub fn reward_marginal(&self, belief: &Belief) -> Vec<f64> {
        self.rew.left_mul(belief.probs())
    }

    /// Imagined roll-out: iterates [`WorldModel::predict_prior`] along
    /// `actions`. In sample mode each step also draws a state from the prior
    /// and an observation and reward from that state's emission rows.
    pub fn imagine_rollout<R: Rng + ?Sized>(
        &self,
        belief: &Belief,
        actions: &[usize],
        rng: &mut R,
        mode: RolloutMode,
    ) -> Vec<RolloutStep> {
        let mut current = belief.clone();
        let mut steps = Vec::with_capacity(actions.len());
        for &a in actions {
            let prior = self.predict_prior(&current, a);
            let (state, obs, reward) = match mode {
                RolloutMode::Expectation => (None, None, None),
                RolloutMode::Sample => {
                    let s = sample_index(prior.probs(), rng);
                    let o = sample_index(self.obs.row(s), rng);
                    let r = sample_index(self.rew.row(s), rng);
                    (Some(s), Some(o), Some(r))
                }
            };
            current = prior.clone();
            steps.push(RolloutStep { prior, state, obs, reward });
        }
        steps
    }
}

/// Whether roll-outs draw single samples or propagate full distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RolloutMode {
    #[default]
    Sample,
    Expectation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutStep {
    pub prior: Belief,
    pub state: Option<usize>,
    pub obs: Option<usize>,
    pub reward: Option<usize>,
}
