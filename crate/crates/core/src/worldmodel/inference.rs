use super::WorldModel;
use crate::dist::{Belief, Categorical};
use crate::{Error, Result};

/// Aligned emissions and the actions between them.
///
/// `actions[t]` is taken after emission `t` and leads into emission `t + 1`,
/// so `actions.len() == obs.len() - 1` for non-empty trajectories.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trajectory {
    pub obs: Vec<usize>,
    pub rewards: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn new(obs: Vec<usize>, rewards: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        let t = Trajectory { obs, rewards, actions };
        t.check_shape()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn check_shape(&self) -> Result<()> {
        if self.rewards.len() != self.obs.len() {
            return Err(Error::Dimension {
                what: "trajectory rewards",
                expected: self.obs.len(),
                found: self.rewards.len(),
            });
        }
        let expected = self.obs.len().saturating_sub(1);
        if self.actions.len() != expected {
            return Err(Error::Dimension {
                what: "trajectory actions",
                expected,
                found: self.actions.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_against(&self, model: &WorldModel) -> Result<()> {
        self.check_shape()?;
        let d = model.dims();
        let bad = |what, expected, found| Error::Dimension { what, expected, found };
        if let Some(&o) = self.obs.iter().find(|&&o| o >= d.n_obs) {
            return Err(bad("observation symbol", d.n_obs, o));
        }
        if let Some(&r) = self.rewards.iter().find(|&&r| r >= d.n_rewards) {
            return Err(Error::RewardCategory(r));
        }
        if let Some(&a) = self.actions.iter().find(|&&a| a >= d.n_actions) {
            return Err(bad("action", d.n_actions, a));
        }
        Ok(())
    }
}

/// Joint emission likelihood `P(o_t | s) P(r_t | s)` for each state.
pub(crate) fn emission(model: &WorldModel, obs: usize, reward: usize, out: &mut [f64]) {
    let like = model.obs_likelihood(obs);
    for (s, o) in out.iter_mut().enumerate() {
        *o = like[s] * model.rew().get(s, reward);
    }
}

/// Scaled forward pass. Returns the filtering posteriors and
/// `ln P(y_t | y_<t)` per step.
fn forward(model: &WorldModel, traj: &Trajectory) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = model.n_states();
    let mut posts: Vec<Vec<f64>> = Vec::with_capacity(traj.len());
    let mut log_norms = Vec::with_capacity(traj.len());
    let mut like = vec![0.0; n];
    let mut prior = model.init().probs().to_vec();
    for t in 0..traj.len() {
        if t > 0 {
            model.trans(traj.actions[t - 1]).left_mul_into(&posts[t - 1], &mut prior);
        }
        emission(model, traj.obs[t], traj.rewards[t], &mut like);
        let mut alpha: Vec<f64> = prior.iter().zip(&like).map(|(p, l)| p * l).collect();
        let c: f64 = alpha.iter().sum();
        log_norms.push(c.ln());
        if c > 0.0 {
            alpha.iter_mut().for_each(|a| *a /= c);
        }
        posts.push(alpha);
    }
    (posts, log_norms)
}

/// Exact `ln P(o_1..T, r_1..T | actions)` by the forward algorithm.
pub fn log_evidence(model: &WorldModel, traj: &Trajectory) -> Result<f64> {
    traj.check_against(model)?;
    Ok(forward(model, traj).1.iter().sum())
}

/// Filtering posteriors `P(s_t | y_1..t)` for every step.
pub fn filtering_posteriors(model: &WorldModel, traj: &Trajectory) -> Result<Vec<Belief>> {
    traj.check_against(model)?;
    let (posts, log_norms) = forward(model, traj);
    if log_norms.contains(&f64::NEG_INFINITY) {
        return Err(Error::DegenerateUpdate);
    }
    Ok(posts.into_iter().map(Categorical::from_normalized).collect())
}

/// Evidence lower bound with the filtering marginals as a mean-field
/// posterior:
///
/// `sum_t E_q_t[ln P(o_t|s) + ln P(r_t|s)] - E_q_{t-1}(s')[KL(q_t || P(s_t|s'))]`
///
/// with `P(s_1 | s_0)` read as the initial distribution. The gap to
/// [`log_evidence`] is the KL from the factorised posterior to the exact
/// smoothing posterior.
///
/// Evaluated as the log-evidence minus that gap. Per step and state the gap
/// is `q_t(s) (ln sum_s' q_{t-1}(s') T(s|s') - sum_s' q_{t-1}(s') ln T(s|s'))`,
/// a Jensen gap of `ln`, so each term is clamped at zero against rounding.
pub fn elbo(model: &WorldModel, traj: &Trajectory) -> Result<f64> {
    traj.check_against(model)?;
    let (posts, log_norms) = forward(model, traj);
    if log_norms.contains(&f64::NEG_INFINITY) {
        return Ok(f64::NEG_INFINITY);
    }
    let evidence: f64 = log_norms.iter().sum();
    let n = model.n_states();
    let mut prior = vec![0.0; n];
    let mut gap = 0.0;
    for t in 1..posts.len() {
        let (prev, q) = (&posts[t - 1], &posts[t]);
        let trans = model.trans(traj.actions[t - 1]);
        trans.left_mul_into(prev, &mut prior);
        for (s, &qs) in q.iter().enumerate() {
            if qs <= 0.0 {
                continue;
            }
            let mut mean_log = 0.0;
            for (sp, &w) in prev.iter().enumerate() {
                if w > 0.0 {
                    mean_log += w * trans.get(sp, s).ln();
                }
            }
            gap += qs * (prior[s].ln() - mean_log).max(0.0);
        }
    }
    Ok(evidence - gap)
}
