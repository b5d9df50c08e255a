//! Random-shooting receding-horizon planner over expected free energy.

use rand::Rng;

use crate::dist::Belief;
use crate::efe::{efe_policy, EfeBreakdown, EfeContext, PreferenceMode, PreferencePrior, PriorSource, RolloutMode};
use crate::preferences::DirichletCounts;
use crate::rng::{derive_seed, seeded};
use crate::worldmodel::{Ensemble, WorldModel};
use crate::{Error, Result};

pub const DEFAULT_CANDIDATES: usize = 128;
pub const DEFAULT_HORIZON: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    pub candidates: usize,
    pub horizon: usize,
    /// Scale on the ensemble disagreement term.
    pub lambda: f64,
    pub rollout: RolloutMode,
    pub prior_source: PriorSource,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            candidates: DEFAULT_CANDIDATES,
            horizon: DEFAULT_HORIZON,
            lambda: 1.0,
            rollout: RolloutMode::Sample,
            prior_source: PriorSource::Thompson,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::InvalidParameter("planner needs at least one candidate".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("planning horizon must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {} must be non-negative", self.lambda)));
        }
        Ok(())
    }
}

/// An action sequence and its score, the negated expected free energy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyCandidate {
    pub actions: Vec<usize>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub best: PolicyCandidate,
    pub best_index: usize,
    pub breakdown: EfeBreakdown,
    /// Score of every candidate, by index.
    pub scores: Vec<f64>,
}

/// Uniform action sequence for candidate `index` under `step_seed`.
pub fn candidate_actions(step_seed: u64, index: usize, horizon: usize, n_actions: usize) -> Vec<usize> {
    let mut rng = seeded(derive_seed(step_seed, index as u64));
    (0..horizon).map(|_| rng.random_range(0..n_actions)).collect()
}

/// Scores one candidate with its own stream, so the result does not depend
/// on evaluation order.
pub fn score_candidate(ctx: &EfeContext<'_>, belief: &Belief, actions: &[usize], step_seed: u64, index: usize) -> Result<EfeBreakdown> {
    let mut rng = seeded(derive_seed(derive_seed(step_seed, index as u64), u64::MAX));
    efe_policy(ctx, belief, actions, &mut rng)
}

/// Scores explicit candidates and returns the argmax of `-G`, lowest index
/// winning ties.
pub fn plan_candidates(ctx: &EfeContext<'_>, belief: &Belief, candidates: Vec<Vec<usize>>, step_seed: u64) -> Result<PlanResult> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    let mut best: Option<(usize, EfeBreakdown)> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for (i, actions) in candidates.iter().enumerate() {
        let b = score_candidate(ctx, belief, actions, step_seed, i)?;
        let score = -b.total;
        if score.is_nan() {
            return Err(Error::InvalidParameter(format!("candidate {i} scored NaN")));
        }
        if best.as_ref().is_none_or(|(j, _)| score > scores[*j]) {
            best = Some((i, b));
        }
        scores.push(score);
    }
    let (best_index, breakdown) = best.expect("non-empty candidate set");
    let actions = candidates.into_iter().nth(best_index).expect("index in range");
    Ok(PlanResult {
        best: PolicyCandidate {
            actions,
            score: scores[best_index],
        },
        best_index,
        breakdown,
        scores,
    })
}

/// Draws the per-call preference sample and `config.candidates` uniform
/// sequences, then scores them.
#[allow(clippy::too_many_arguments)]
pub fn plan<R: Rng + ?Sized>(
    model: &WorldModel,
    ensemble: Option<&Ensemble>,
    belief: &Belief,
    prefs: Option<&DirichletCounts>,
    mode: PreferenceMode,
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanResult> {
    config.validate()?;
    let prior = PreferencePrior::draw(mode, prefs, config.prior_source, rng)?;
    let step_seed: u64 = rng.random();
    let ctx = EfeContext {
        model,
        ensemble,
        prior: &prior,
        rollout: config.rollout,
        lambda: config.lambda,
    };
    let candidates = (0..config.candidates)
        .map(|i| candidate_actions(step_seed, i, config.horizon, model.n_actions()))
        .collect();
    plan_candidates(&ctx, belief, candidates, step_seed)
}

/// First action of the winning plan.
pub fn act<R: Rng + ?Sized>(
    model: &WorldModel,
    ensemble: Option<&Ensemble>,
    belief: &Belief,
    prefs: Option<&DirichletCounts>,
    mode: PreferenceMode,
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<(usize, PlanResult)> {
    let result = plan(model, ensemble, belief, prefs, mode, config, rng)?;
    Ok((result.best.actions[0], result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Categorical;
    use crate::worldmodel::StochasticMatrix;
    use proptest::prelude::*;

    /// Four actions on two states: action 2 moves to state 1, which emits
    /// reward category 3; everything else returns to state 0 (category 0).
    fn four_action_toy() -> WorldModel {
        let to = |s: usize| {
            let mut rows = vec![vec![0.0; 2]; 2];
            rows.iter_mut().for_each(|r| r[s] = 1.0);
            StochasticMatrix::from_rows(&rows).unwrap()
        };
        WorldModel::new(
            Categorical::delta(2, 0),
            vec![to(0), to(0), to(1), to(0)],
            StochasticMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
            StochasticMatrix::from_rows(&[vec![0.97, 0.01, 0.01, 0.01], vec![0.01, 0.01, 0.01, 0.97]]).unwrap(),
        )
        .unwrap()
    }

    fn reward_prefs() -> DirichletCounts {
        DirichletCounts::new(vec![1.0, 1.0, 1.0, 30.0]).unwrap()
    }

    fn ctx<'a>(model: &'a WorldModel, prior: &'a PreferencePrior) -> EfeContext<'a> {
        EfeContext {
            model,
            ensemble: None,
            prior,
            rollout: RolloutMode::Expectation,
            lambda: 1.0,
        }
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let model = four_action_toy();
        let prior = PreferencePrior::draw(PreferenceMode::RewardPref, Some(&reward_prefs()), PriorSource::ExpectedLog, &mut seeded(0)).unwrap();
        let all: Vec<Vec<usize>> = (0..16).map(|k| vec![k / 4, k % 4]).collect();
        let c = ctx(&model, &prior);
        let result = plan_candidates(&c, model.init(), all.clone(), 9).unwrap();
        // Oracle: evaluate every sequence directly and keep the first minimum.
        let mut best = (f64::INFINITY, vec![]);
        for seq in &all {
            let g = efe_policy(&c, model.init(), seq, &mut seeded(0)).unwrap().total;
            if g < best.0 {
                best = (g, seq.clone());
            }
        }
        assert_eq!(result.best.actions, best.1);
        assert_eq!(result.best.actions, vec![2, 2]);
        assert!(result.scores.iter().all(|s| *s <= result.best.score));
    }

    #[test]
    fn default_horizon_length() {
        let model = four_action_toy();
        let r = plan(&model, None, model.init(), None, PreferenceMode::PlainEfe, &PlannerConfig::default(), &mut seeded(1)).unwrap();
        assert_eq!(r.best.actions.len(), 15);
        assert_eq!(r.scores.len(), 128);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let model = four_action_toy();
        let prior = PreferencePrior::Plain;
        let c = ctx(&model, &prior);
        let r = plan_candidates(&c, model.init(), vec![vec![0, 1], vec![1, 0], vec![0, 1]], 0).unwrap();
        assert_eq!(r.scores[0], r.scores[2]);
        assert_ne!(r.best_index, 2);
        let r = plan_candidates(&c, model.init(), vec![vec![3], vec![3], vec![3]], 0).unwrap();
        assert_eq!(r.best_index, 0);
    }

    #[test]
    fn acts_toward_preferred_reward_under_every_seed() {
        let model = four_action_toy();
        let config = PlannerConfig {
            candidates: 64,
            horizon: 1,
            ..Default::default()
        };
        for seed in 0..100 {
            let (a, _) = act(&model, None, model.init(), Some(&reward_prefs()), PreferenceMode::RewardPref, &config, &mut seeded(seed)).unwrap();
            assert_eq!(a, 2, "seed {seed}");
        }
    }

    #[test]
    fn same_seed_same_action() {
        let model = four_action_toy();
        let cfg = PlannerConfig::default();
        let a = plan(&model, None, model.init(), Some(&reward_prefs()), PreferenceMode::RewardPref, &cfg, &mut seeded(4)).unwrap();
        let b = plan(&model, None, model.init(), Some(&reward_prefs()), PreferenceMode::RewardPref, &cfg, &mut seeded(4)).unwrap();
        assert_eq!(a, b);
    }

    /// Belief split over states 0 and 1. Action 0 keeps it there, where both
    /// states emit alike; action 1 moves to states 2 and 3, whose emissions
    /// differ. Every row has the same entropy, so only the state information
    /// gain separates the actions.
    #[test]
    fn plain_mode_picks_the_informative_action() {
        let keep = StochasticMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
        ])
        .unwrap();
        let split = StochasticMatrix::from_rows(&[
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let model = WorldModel::new(
            Categorical::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap(),
            vec![keep, split],
            StochasticMatrix::from_rows(&[
                vec![0.9, 0.05, 0.05],
                vec![0.9, 0.05, 0.05],
                vec![0.05, 0.9, 0.05],
                vec![0.05, 0.05, 0.9],
            ])
            .unwrap(),
            StochasticMatrix::uniform(4, 4),
        )
        .unwrap();
        let prior = PreferencePrior::Plain;
        let c = ctx(&model, &prior);
        let g: Vec<f64> = (0..2).map(|a| efe_policy(&c, model.init(), &[a], &mut seeded(0)).unwrap().total).collect();
        assert!(g[1] < g[0], "{g:?}");
        let config = PlannerConfig {
            candidates: 16,
            horizon: 1,
            ..Default::default()
        };
        for seed in 0..10 {
            let (a, _) = act(&model, None, model.init(), None, PreferenceMode::PlainEfe, &config, &mut seeded(seed)).unwrap();
            assert_eq!(a, 1);
        }
    }

    #[test]
    fn rejects_empty_configs() {
        let model = four_action_toy();
        let cfg = PlannerConfig { candidates: 0, ..Default::default() };
        assert!(plan(&model, None, model.init(), None, PreferenceMode::PlainEfe, &cfg, &mut seeded(0)).is_err());
        let cfg = PlannerConfig { horizon: 0, ..Default::default() };
        assert!(plan(&model, None, model.init(), None, PreferenceMode::PlainEfe, &cfg, &mut seeded(0)).is_err());
    }

    proptest! {
        #[test]
        fn evaluation_order_does_not_change_scores(seed in any::<u64>(), n in 1usize..20) {
            let model = four_action_toy();
            let prefs = reward_prefs();
            let prior = PreferencePrior::draw(PreferenceMode::RewardPref, Some(&prefs), PriorSource::Thompson, &mut seeded(seed)).unwrap();
            let c = EfeContext { rollout: RolloutMode::Sample, ..ctx(&model, &prior) };
            let cands: Vec<Vec<usize>> = (0..n).map(|i| candidate_actions(seed, i, 5, 4)).collect();
            let forward = plan_candidates(&c, model.init(), cands.clone(), seed).unwrap();
            for i in (0..n).rev() {
                let b = score_candidate(&c, model.init(), &cands[i], seed, i).unwrap();
                prop_assert_eq!((-b.total).to_bits(), forward.scores[i].to_bits());
            }
            prop_assert!(forward.scores.iter().all(|s| *s <= forward.best.score));
        }
    }
}
