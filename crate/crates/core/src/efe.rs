//! Expected free energy of an action sequence, plain or augmented with learnt
//! reward or state preferences. Lower is better.

use rand::Rng;

use crate::dist::{entropy, kl_divergence, safe_ln, Belief};
use crate::preferences::DirichletCounts;
use crate::worldmodel::{Ensemble, WorldModel};
use crate::{Error, Result};

pub use crate::worldmodel::RolloutMode;

/// Which objective the planner minimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum PreferenceMode {
    /// Information seeking only.
    #[default]
    PlainEfe,
    /// Learnt preferences over reward categories.
    RewardPref,
    /// Learnt preferences over latent states.
    StatePref,
}

impl PreferenceMode {
    pub const ALL: [PreferenceMode; 3] = [PreferenceMode::PlainEfe, PreferenceMode::RewardPref, PreferenceMode::StatePref];

    pub fn name(self) -> &'static str {
        match self {
            PreferenceMode::PlainEfe => "plain",
            PreferenceMode::RewardPref => "reward-pref",
            PreferenceMode::StatePref => "state-pref",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        PreferenceMode::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn learns(self) -> bool {
        self != PreferenceMode::PlainEfe
    }
}

/// How a planning call turns Dirichlet counts into log preferences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PriorSource {
    /// Log of one Dirichlet draw.
    #[default]
    Thompson,
    /// Digamma log-expectation.
    ExpectedLog,
}

impl PriorSource {
    pub fn name(self) -> &'static str {
        match self {
            PriorSource::Thompson => "thompson",
            PriorSource::ExpectedLog => "expected-log",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [PriorSource::Thompson, PriorSource::ExpectedLog].into_iter().find(|m| m.name() == s)
    }
}

/// Log preferences fixed for the duration of one planning call.
#[derive(Clone, Debug, PartialEq)]
pub enum PreferencePrior {
    Plain,
    Reward(Vec<f64>),
    State(Vec<f64>),
}

impl PreferencePrior {
    pub fn draw<R: Rng + ?Sized>(
        mode: PreferenceMode,
        prefs: Option<&DirichletCounts>,
        source: PriorSource,
        rng: &mut R,
    ) -> Result<Self> {
        let logs = |p: &DirichletCounts, rng: &mut R| match source {
            PriorSource::Thompson => p.thompson_sample(rng).probs().iter().map(|x| safe_ln(*x)).collect(),
            PriorSource::ExpectedLog => p.expected_log(),
        };
        match (mode, prefs) {
            (PreferenceMode::PlainEfe, _) => Ok(PreferencePrior::Plain),
            (PreferenceMode::RewardPref, Some(p)) => Ok(PreferencePrior::Reward(logs(p, rng))),
            (PreferenceMode::StatePref, Some(p)) => Ok(PreferencePrior::State(logs(p, rng))),
            (_, None) => Err(Error::InvalidParameter(format!("{} needs preference counts", mode.name()))),
        }
    }

    pub fn mode(&self) -> PreferenceMode {
        match self {
            PreferencePrior::Plain => PreferenceMode::PlainEfe,
            PreferencePrior::Reward(_) => PreferenceMode::RewardPref,
            PreferencePrior::State(_) => PreferenceMode::StatePref,
        }
    }
}

/// One step's contribution. `total = extrinsic + state_info_gain +
/// param_info_gain`, each already signed as it enters the objective.
///
/// Slot contents per mode:
///
/// | mode | extrinsic | state_info_gain | param_info_gain |
/// |------|-----------|-----------------|-----------------|
/// | plain | 0 | obs entropy - KL(prior, posterior) | -lambda * disagreement |
/// | reward | -E ln C | -KL(prior, posterior) | -lambda * disagreement |
/// | state | ln Q(s) - ln P(s \| D) | obs entropy | -lambda * disagreement |
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EfeStep {
    pub extrinsic: f64,
    pub state_info_gain: f64,
    pub param_info_gain: f64,
    pub total: f64,
}

impl EfeStep {
    fn new(extrinsic: f64, state_info_gain: f64, param_info_gain: f64) -> Self {
        EfeStep {
            extrinsic,
            state_info_gain,
            param_info_gain,
            total: extrinsic + state_info_gain + param_info_gain,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EfeBreakdown {
    pub extrinsic: f64,
    pub state_info_gain: f64,
    pub param_info_gain: f64,
    pub total: f64,
    pub per_step: Vec<EfeStep>,
}

impl EfeBreakdown {
    fn push(&mut self, step: EfeStep) {
        self.extrinsic += step.extrinsic;
        self.state_info_gain += step.state_info_gain;
        self.param_info_gain += step.param_info_gain;
        self.total += step.total;
        self.per_step.push(step);
    }
}

/// `-sum_r Q(r) ln C[r]`.
pub fn extrinsic_reward_term(reward_marginal: &[f64], log_pref: &[f64]) -> f64 {
    -reward_marginal.iter().zip(log_pref).map(|(q, l)| if *q > 0.0 { q * l } else { 0.0 }).sum::<f64>()
}

/// `KL(prior || posterior)` where the posterior conditions `prior` on `obs`.
pub fn state_info_gain_term(model: &WorldModel, prior: &Belief, obs: usize) -> Result<f64> {
    let post = model.update(prior, obs, None)?;
    Ok(kl_divergence(prior.probs(), post.probs()))
}

/// Expected observation entropy `sum_s b(s) H(P(o | s))`.
pub fn obs_entropy_term(model: &WorldModel, belief: &Belief) -> f64 {
    belief.probs().iter().zip(model.obs_row_entropy()).map(|(b, h)| b * h).sum()
}

/// `ln Q(s) - ln P(s | D)` at a sampled state.
pub fn state_divergence_term(prior: &Belief, log_pref: &[f64], state: usize) -> f64 {
    prior.probs()[state].ln() - log_pref[state]
}

/// `-lambda * disagreement`, never positive.
pub fn param_info_gain_term(ensemble: &Ensemble, belief: &Belief, action: usize, lambda: f64) -> f64 {
    -lambda * ensemble.disagreement(belief, action)
}

/// Everything a policy evaluation reads; shared across candidates.
#[derive(Clone, Copy, Debug)]
pub struct EfeContext<'a> {
    pub model: &'a WorldModel,
    pub ensemble: Option<&'a Ensemble>,
    pub prior: &'a PreferencePrior,
    pub rollout: RolloutMode,
    /// Scale on the ensemble disagreement.
    pub lambda: f64,
}

impl EfeContext<'_> {
    pub fn check(&self) -> Result<()> {
        let d = self.model.dims();
        let (what, expected, found) = match self.prior {
            PreferencePrior::Plain => ("", 0, 0),
            PreferencePrior::Reward(l) => ("reward preferences", d.n_rewards, l.len()),
            PreferencePrior::State(l) => ("state preferences", d.n_states, l.len()),
        };
        if expected != found {
            return Err(Error::Dimension { what, expected, found });
        }
        if let Some(e) = self.ensemble {
            if e.dims() != d {
                return Err(Error::InvalidParameter("ensemble dimensions differ from the model".into()));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("disagreement scale {} must be non-negative", self.lambda)));
        }
        Ok(())
    }
}

/// Expected free energy of `policy` from `belief`, summed over the horizon.
pub fn efe_policy<R: Rng + ?Sized>(
    ctx: &EfeContext<'_>,
    belief: &Belief,
    policy: &[usize],
    rng: &mut R,
) -> Result<EfeBreakdown> {
    ctx.check()?;
    let model = ctx.model;
    if belief.len() != model.n_states() {
        return Err(Error::Dimension {
            what: "belief",
            expected: model.n_states(),
            found: belief.len(),
        });
    }
    if let Some(&a) = policy.iter().find(|&&a| a >= model.n_actions()) {
        return Err(Error::Dimension {
            what: "action",
            expected: model.n_actions(),
            found: a,
        });
    }
    let steps = model.imagine_rollout(belief, policy, rng, ctx.rollout);
    let mut out = EfeBreakdown {
        per_step: Vec::with_capacity(policy.len()),
        ..Default::default()
    };
    let mut previous = belief;
    for (step, &action) in steps.iter().zip(policy) {
        let prior = &step.prior;
        let param = ctx.ensemble.map_or(0.0, |e| param_info_gain_term(e, previous, action, ctx.lambda));
        let info = || -> Result<f64> {
            match step.obs {
                Some(o) => state_info_gain_term(model, prior, o),
                None => expected_state_info_gain(model, prior),
            }
        };
        let terms = match ctx.prior {
            PreferencePrior::Plain => EfeStep::new(0.0, obs_entropy_term(model, prior) - info()?, param),
            PreferencePrior::Reward(log_c) => {
                EfeStep::new(extrinsic_reward_term(&model.reward_marginal(prior), log_c), -info()?, param)
            }
            PreferencePrior::State(log_d) => {
                let divergence = match step.state {
                    Some(s) => state_divergence_term(prior, log_d, s),
                    None => prior
                        .probs()
                        .iter()
                        .zip(log_d)
                        .filter(|(q, _)| **q > 0.0)
                        .map(|(q, l)| q * (q.ln() - l))
                        .sum(),
                };
                EfeStep::new(divergence, obs_entropy_term(model, prior), param)
            }
        };
        out.push(terms);
        previous = prior;
    }
    Ok(out)
}

/// `E_o[KL(prior || posterior_o)]` with `o` drawn from the predicted
/// observation marginal.
pub fn expected_state_info_gain(model: &WorldModel, prior: &Belief) -> Result<f64> {
    let marginal = model.obs_marginal(prior);
    let mut total = 0.0;
    for (o, &p) in marginal.iter().enumerate() {
        if p > 0.0 {
            total += p * state_info_gain_term(model, prior, o)?;
        }
    }
    Ok(total)
}

/// Entropy of the predicted observation marginal, exposed for diagnostics.
pub fn predicted_obs_entropy(model: &WorldModel, belief: &Belief) -> f64 {
    entropy(&model.obs_marginal(belief))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Categorical;
    use crate::rng::seeded;
    use crate::worldmodel::{ModelDims, StochasticMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn row_random(rng: &mut crate::rng::PepperRng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let t: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= t);
        v
    }

    fn random_model(rng: &mut crate::rng::PepperRng, d: ModelDims) -> WorldModel {
        let m = |rng: &mut crate::rng::PepperRng, r: usize, c: usize| {
            StochasticMatrix::from_rows(&(0..r).map(|_| row_random(rng, c)).collect::<Vec<_>>()).unwrap()
        };
        WorldModel::new(
            Categorical::new(row_random(rng, d.n_states)).unwrap(),
            (0..d.n_actions).map(|_| m(rng, d.n_states, d.n_states)).collect(),
            m(rng, d.n_states, d.n_obs),
            m(rng, d.n_states, d.n_rewards),
        )
        .unwrap()
    }

    /// Two states, two actions: action 0 stays in state 0 (reward category 0),
    /// action 1 moves to state 1 (reward category 2).
    fn toy() -> WorldModel {
        WorldModel::new(
            Categorical::delta(2, 0),
            vec![
                StochasticMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap(),
                StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap(),
            ],
            StochasticMatrix::identity(2),
            StochasticMatrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]).unwrap(),
        )
        .unwrap()
    }

    fn ctx<'a>(model: &'a WorldModel, ensemble: Option<&'a Ensemble>, prior: &'a PreferencePrior) -> EfeContext<'a> {
        EfeContext {
            model,
            ensemble,
            prior,
            rollout: RolloutMode::Sample,
            lambda: 1.0,
        }
    }

    #[test]
    fn extrinsic_examples() {
        let uniform = vec![0.25f64.ln(); 4];
        assert!((extrinsic_reward_term(&[0.1, 0.2, 0.3, 0.4], &uniform) - 4f64.ln()).abs() < 1e-15);
        let log_c: Vec<f64> = [0.9f64, 0.05, 0.03, 0.02].iter().map(|x| x.ln()).collect();
        assert!((extrinsic_reward_term(&[1.0, 0.0, 0.0, 0.0], &log_c) - 0.10536051565782628).abs() < 1e-12);
    }

    #[test]
    fn state_info_gain_examples() {
        let model = WorldModel::new(
            Categorical::uniform(2),
            vec![StochasticMatrix::identity(2)],
            StochasticMatrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap(),
            StochasticMatrix::uniform(2, 4),
        )
        .unwrap();
        let kl = state_info_gain_term(&model, &Categorical::uniform(2), 0).unwrap();
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((kl - expected).abs() < 1e-12);
        assert!((kl - 0.5108).abs() < 1e-4);
        let flat = WorldModel::new(
            Categorical::uniform(2),
            vec![StochasticMatrix::identity(2)],
            StochasticMatrix::uniform(2, 2),
            StochasticMatrix::uniform(2, 4),
        )
        .unwrap();
        assert_eq!(state_info_gain_term(&flat, &Categorical::uniform(2), 1).unwrap(), 0.0);
    }

    #[test]
    fn obs_entropy_examples() {
        let det = toy();
        assert_eq!(obs_entropy_term(&det, &Categorical::uniform(2)), 0.0);
        let flat = WorldModel::new(
            Categorical::uniform(2),
            vec![StochasticMatrix::identity(2)],
            StochasticMatrix::uniform(2, 5),
            StochasticMatrix::uniform(2, 4),
        )
        .unwrap();
        assert!((obs_entropy_term(&flat, &Categorical::new(vec![0.3, 0.7]).unwrap()) - 5f64.ln()).abs() < 1e-12);
        let mixed = WorldModel::new(
            Categorical::uniform(2),
            vec![StochasticMatrix::identity(2)],
            StochasticMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap(),
            StochasticMatrix::uniform(2, 4),
        )
        .unwrap();
        assert!((obs_entropy_term(&mixed, &Categorical::uniform(2)) - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn state_divergence_examples() {
        let u = Categorical::uniform(4);
        let lp = vec![0.25f64.ln(); 4];
        for s in 0..4 {
            assert!(state_divergence_term(&u, &lp, s).abs() < 1e-15);
        }
        let q = Categorical::new(vec![0.5, 0.5]).unwrap();
        let p = vec![0.25f64.ln(), 0.75f64.ln()];
        assert!((state_divergence_term(&q, &p, 0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn param_term_examples() {
        let member = |o: usize| {
            let mut row = vec![0.0; 3];
            row[o] = 1.0;
            WorldModel::new(
                Categorical::uniform(2),
                vec![StochasticMatrix::identity(2)],
                StochasticMatrix::from_rows(&[row.clone(), row]).unwrap(),
                StochasticMatrix::uniform(2, 4),
            )
            .unwrap()
        };
        let same = Ensemble::new(vec![member(0), member(0)]).unwrap();
        assert_eq!(param_info_gain_term(&same, &Categorical::uniform(2), 0, 1.0), 0.0);
        let split = Ensemble::new(vec![member(0), member(2)]).unwrap();
        let v = param_info_gain_term(&split, &Categorical::uniform(2), 0, 2.0);
        assert!((v + 2.0 * 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_policy_is_zero() {
        let model = toy();
        let prior = PreferencePrior::Reward(vec![0.25f64.ln(); 4]);
        let b = efe_policy(&ctx(&model, None, &prior), &Categorical::uniform(2), &[], &mut seeded(0)).unwrap();
        assert_eq!(b, EfeBreakdown::default());
    }

    #[test]
    fn uniform_reward_prior_on_deterministic_model() {
        let model = toy();
        let ens = Ensemble::new(vec![model.clone(), model.clone()]).unwrap();
        let prior = PreferencePrior::Reward(vec![0.25f64.ln(); 4]);
        let b = efe_policy(&ctx(&model, Some(&ens), &prior), model.init(), &[0, 1, 1, 0, 1], &mut seeded(3)).unwrap();
        assert!((b.total - 5.0 * 4f64.ln()).abs() < 1e-12);
        assert_eq!(b.state_info_gain, 0.0);
        assert_eq!(b.param_info_gain, 0.0);
    }

    #[test]
    fn preferred_reward_policy_scores_lower() {
        let model = toy();
        let mut prefs = DirichletCounts::uniform(4);
        prefs.accumulate_category(2, 20.0).unwrap();
        for seed in 0..20 {
            let prior = PreferencePrior::draw(PreferenceMode::RewardPref, Some(&prefs), PriorSource::Thompson, &mut seeded(seed)).unwrap();
            let c = ctx(&model, None, &prior);
            let good = efe_policy(&c, model.init(), &[1], &mut seeded(seed)).unwrap();
            let bad = efe_policy(&c, model.init(), &[0], &mut seeded(seed)).unwrap();
            assert!(good.total < bad.total);
        }
    }

    #[test]
    fn mode_and_dimension_checks() {
        let model = toy();
        assert!(PreferencePrior::draw(PreferenceMode::StatePref, None, PriorSource::Thompson, &mut seeded(0)).is_err());
        let bad = PreferencePrior::State(vec![0.0; 3]);
        assert!(efe_policy(&ctx(&model, None, &bad), model.init(), &[0], &mut seeded(0)).is_err());
        let prior = PreferencePrior::Plain;
        assert!(efe_policy(&ctx(&model, None, &prior), model.init(), &[2], &mut seeded(0)).is_err());
        assert_eq!(PreferenceMode::from_name("state-pref"), Some(PreferenceMode::StatePref));
    }

    #[test]
    fn reward_and_plain_differ_by_constant_minus_ambiguity() {
        let mut rng = seeded(21);
        let d = ModelDims {
            n_states: 3,
            n_actions: 2,
            n_obs: 4,
            n_rewards: 4,
        };
        for k in 0..50 {
            let model = random_model(&mut rng, d);
            let ens = Ensemble::new(vec![model.clone(), model.clone(), model.clone()]).unwrap();
            let policy: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
            let belief = Categorical::new(row_random(&mut rng, 3)).unwrap();
            let reward = PreferencePrior::Reward(vec![0.25f64.ln(); 4]);
            let plain = PreferencePrior::Plain;
            let r = efe_policy(&ctx(&model, Some(&ens), &reward), &belief, &policy, &mut seeded(k)).unwrap();
            let p = efe_policy(&ctx(&model, Some(&ens), &plain), &belief, &policy, &mut seeded(k)).unwrap();
            let steps = model.imagine_rollout(&belief, &policy, &mut seeded(k), RolloutMode::Sample);
            let expected: f64 = steps.iter().map(|s| 4f64.ln() - obs_entropy_term(&model, &s.prior)).sum();
            assert!((r.total - p.total - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_efe_matches_expectation() {
        let mut rng = seeded(5);
        let d = ModelDims {
            n_states: 2,
            n_actions: 2,
            n_obs: 3,
            n_rewards: 4,
        };
        let model = random_model(&mut rng, d);
        let ens = Ensemble::new(vec![random_model(&mut rng, d), random_model(&mut rng, d)]).unwrap();
        let policy = [0, 1, 1, 0];
        let belief = Categorical::new(vec![0.3, 0.7]).unwrap();
        for prior in [
            PreferencePrior::Plain,
            PreferencePrior::Reward(vec![0.1f64.ln(), 0.2f64.ln(), 0.3f64.ln(), 0.4f64.ln()]),
            PreferencePrior::State(vec![0.8f64.ln(), 0.2f64.ln()]),
        ] {
            let mut c = ctx(&model, Some(&ens), &prior);
            c.rollout = RolloutMode::Expectation;
            let exact = efe_policy(&c, &belief, &policy, &mut seeded(0)).unwrap().total;
            c.rollout = RolloutMode::Sample;
            let n = 10_000;
            let draws: Vec<f64> = (0..n).map(|s| efe_policy(&c, &belief, &policy, &mut seeded(s)).unwrap().total).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - exact).abs() <= 3.0 * se.max(1e-12), "{:?}: {mean} vs {exact} (se {se})", prior.mode());
        }
    }

    #[test]
    fn more_mass_on_produced_reward_lowers_total() {
        let model = toy();
        let mut prefs = DirichletCounts::uniform(4);
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let prior = PreferencePrior::draw(PreferenceMode::RewardPref, Some(&prefs), PriorSource::ExpectedLog, &mut seeded(0)).unwrap();
            let b = efe_policy(&ctx(&model, None, &prior), model.init(), &[1, 1, 1], &mut seeded(0)).unwrap();
            assert!(b.total < last);
            last = b.total;
            prefs.accumulate_category(2, 1.0).unwrap();
        }
    }

    proptest! {
        #[test]
        fn additivity_and_signs(seed in any::<u64>(), mode in 0usize..3, len in 0usize..8) {
            let mut rng = crate::rng::PepperRng::seed_from_u64(seed);
            let d = ModelDims { n_states: 3, n_actions: 3, n_obs: 4, n_rewards: 4 };
            let model = random_model(&mut rng, d);
            let ens = Ensemble::new(vec![random_model(&mut rng, d), random_model(&mut rng, d)]).unwrap();
            let counts = DirichletCounts::new(row_random(&mut rng, if mode == 2 { 3 } else { 4 }).iter().map(|x| x * 10.0).collect()).unwrap();
            let prior = PreferencePrior::draw(PreferenceMode::ALL[mode], Some(&counts), PriorSource::Thompson, &mut rng).unwrap();
            let policy: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
            let belief = Categorical::new(row_random(&mut rng, 3)).unwrap();
            let b = efe_policy(&ctx(&model, Some(&ens), &prior), &belief, &policy, &mut rng).unwrap();
            prop_assert!((b.total - (b.extrinsic + b.state_info_gain + b.param_info_gain)).abs() < 1e-9);
            let sum: f64 = b.per_step.iter().map(|s| s.total).sum();
            prop_assert!((sum - b.total).abs() < 1e-9);
            for s in &b.per_step {
                prop_assert!((s.total - (s.extrinsic + s.state_info_gain + s.param_info_gain)).abs() < 1e-9);
                prop_assert!(s.param_info_gain <= 0.0);
            }
            let o = rng.random_range(0..4);
            prop_assert!(state_info_gain_term(&model, &belief, o).unwrap() >= 0.0);
            prop_assert!(obs_entropy_term(&model, &belief) >= 0.0);
        }
    }
}
