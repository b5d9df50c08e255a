//! The two-timescale loop: act on fixed preferences for an episode, then fold
//! the episode's events into the Dirichlet counts.

use std::io::{Read, Write};

use crate::dist::Belief;
use crate::efe::{EfeBreakdown, PreferenceMode};
use crate::envlab::{Action, Env, EnvConfig, ObsEncoding, Observation};
use crate::planner::{act, PlannerConfig};
use crate::preferences::{apply_window, DirichletCounts, PreferenceWindow};
use crate::rng::{derive_seed, seeded, PepperRng};
use crate::worldmodel::{Ensemble, WorldModel};
use crate::{Error, Result, N_REWARD};

pub const DEFAULT_EPISODES: usize = 50;
pub const DEFAULT_EPISODE_LEN: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct PepperConfig {
    pub mode: PreferenceMode,
    pub episodes: usize,
    pub episode_len: usize,
    /// Learning rate on every accumulated event.
    pub alpha: f64,
    /// Sliding window capacity in episodes; `None` keeps everything.
    pub window: Option<usize>,
    /// Whether the observation collected at reset counts as an event.
    pub include_reset_event: bool,
    pub planner: PlannerConfig,
}

impl Default for PepperConfig {
    fn default() -> Self {
        PepperConfig {
            mode: PreferenceMode::StatePref,
            episodes: DEFAULT_EPISODES,
            episode_len: DEFAULT_EPISODE_LEN,
            alpha: 1.0,
            window: None,
            include_reset_event: true,
            planner: PlannerConfig::default(),
        }
    }
}

impl PepperConfig {
    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        if self.episode_len == 0 {
            return Err(Error::InvalidParameter("episode length must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha {} must be positive", self.alpha)));
        }
        match (self.mode, self.window) {
            (_, Some(0)) => Err(Error::InvalidParameter("window capacity must be at least 1".into())),
            (PreferenceMode::PlainEfe, Some(_)) => {
                Err(Error::InvalidParameter("a preference window needs a learning mode".into()))
            }
            _ => Ok(()),
        }
    }
}

/// The frozen generative model the agent plans with.
#[derive(Clone, Debug)]
pub struct Agent {
    pub model: WorldModel,
    pub ensemble: Option<Ensemble>,
    pub encoding: ObsEncoding,
}

impl Agent {
    pub fn n_preferences(&self, mode: PreferenceMode) -> usize {
        match mode {
            PreferenceMode::RewardPref => N_REWARD,
            _ => self.model.n_states(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// 0 for the reset observation, then 1..=episode_len.
    pub step_index: usize,
    pub position: (usize, usize),
    /// `None` on the reset record.
    pub action: Option<Action>,
    pub obs: usize,
    pub reward_cat: usize,
    pub map_id: u64,
    pub prior: Belief,
    pub posterior: Belief,
    /// Breakdown of the plan that chose `action`.
    pub efe: Option<EfeBreakdown>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode_index: usize,
    pub reset: StepRecord,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn records(&self) -> impl Iterator<Item = &StepRecord> {
        std::iter::once(&self.reset).chain(&self.steps)
    }

    pub fn positions(&self) -> Vec<(usize, usize)> {
        self.records().map(|r| r.position).collect()
    }

    pub fn map_ids(&self) -> Vec<u64> {
        self.records().map(|r| r.map_id).collect()
    }

    pub fn reward_categories(&self) -> Vec<usize> {
        self.records().map(|r| r.reward_cat).collect()
    }

    /// Per-step preference events for `mode`: one-hot reward categories or
    /// prior state beliefs.
    pub fn events(&self, mode: PreferenceMode, include_reset: bool) -> Vec<Vec<f64>> {
        let skip = usize::from(!include_reset);
        self.records()
            .skip(skip)
            .filter_map(|r| match mode {
                PreferenceMode::PlainEfe => None,
                PreferenceMode::RewardPref => {
                    let mut v = vec![0.0; N_REWARD];
                    v[r.reward_cat] = 1.0;
                    Some(v)
                }
                PreferenceMode::StatePref => Some(r.prior.probs().to_vec()),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub episodes: Vec<EpisodeLog>,
    /// Counts before the first episode and after each one.
    pub snapshots: Vec<DirichletCounts>,
    pub fingerprint: String,
}

fn observe(agent: &Agent, obs: &Observation) -> Result<usize> {
    let symbol = obs.symbol(agent.encoding);
    if symbol >= agent.model.n_obs() {
        return Err(Error::Dimension {
            what: "observation symbol",
            expected: agent.model.n_obs(),
            found: symbol,
        });
    }
    Ok(symbol)
}

/// Runs one episode with fixed preferences, starting from `belief` (carried
/// over from the previous episode). Returns the log and the final posterior.
pub fn run_episode(
    env: &mut Env,
    agent: &Agent,
    belief: &Belief,
    prefs: Option<&DirichletCounts>,
    config: &PepperConfig,
    episode_index: usize,
    rng: &mut PepperRng,
) -> Result<(EpisodeLog, Belief)> {
    let o = env.reset();
    let symbol = observe(agent, &o)?;
    let posterior = agent.model.update(belief, symbol, Some(o.reward_cat))?;
    let reset = StepRecord {
        step_index: 0,
        position: env.position(),
        action: None,
        obs: symbol,
        reward_cat: o.reward_cat,
        map_id: env.map().map_id,
        prior: belief.clone(),
        posterior,
        efe: None,
    };
    let mut current = reset.posterior.clone();
    let mut steps = Vec::with_capacity(config.episode_len);
    for t in 1..=config.episode_len {
        let (a, plan) = act(
            &agent.model,
            agent.ensemble.as_ref(),
            &current,
            prefs,
            config.mode,
            &config.planner,
            rng,
        )?;
        let action = Action::from_index(a).ok_or(Error::Dimension {
            what: "action",
            expected: Action::COUNT,
            found: a,
        })?;
        let o = env.step(action);
        let symbol = observe(agent, &o)?;
        let prior = agent.model.predict_prior(&current, a);
        let posterior = agent.model.update(&prior, symbol, Some(o.reward_cat))?;
        current = posterior.clone();
        steps.push(StepRecord {
            step_index: t,
            position: env.position(),
            action: Some(action),
            obs: symbol,
            reward_cat: o.reward_cat,
            map_id: env.map().map_id,
            prior,
            posterior,
            efe: Some(plan.breakdown),
        });
    }
    Ok((
        EpisodeLog {
            episode_index,
            reset,
            steps,
        },
        current,
    ))
}

/// Folds an episode's events into `counts`, either directly or through the
/// window.
pub fn update_preferences(
    counts: &mut DirichletCounts,
    base: &DirichletCounts,
    window: Option<&mut PreferenceWindow>,
    log: &EpisodeLog,
    config: &PepperConfig,
) -> Result<()> {
    let events = log.events(config.mode, config.include_reset_event);
    match window {
        None => {
            for e in &events {
                counts.accumulate(e, config.alpha)?;
            }
        }
        Some(w) => {
            let mut delta = vec![0.0; counts.len()];
            for e in &events {
                delta.iter_mut().zip(e).for_each(|(d, x)| *d += config.alpha * x);
            }
            *counts = apply_window(w, base, delta)?;
        }
    }
    Ok(())
}

/// The outer loop: alternate episodes and preference updates.
pub fn learn_preferences(agent: &Agent, env_config: EnvConfig, config: &PepperConfig, seed: u64) -> Result<RunLog> {
    config.validate()?;
    let mut env = Env::new(env_config, derive_seed(seed, 0))?;
    let n_obs = agent.encoding.n_symbols(&env.config().map);
    if n_obs != agent.model.n_obs() {
        return Err(Error::Dimension {
            what: "observation alphabet",
            expected: agent.model.n_obs(),
            found: n_obs,
        });
    }
    let mut rng = seeded(derive_seed(seed, 1));
    let base = DirichletCounts::uniform(agent.n_preferences(config.mode));
    let mut counts = base.clone();
    let mut window = config.window.map(PreferenceWindow::new).transpose()?;
    let mut snapshots = vec![counts.clone()];
    let mut episodes = Vec::with_capacity(config.episodes);
    let mut belief = agent.model.init().clone();
    for e in 0..config.episodes {
        let prefs = config.mode.learns().then_some(&counts);
        let (log, last) = run_episode(&mut env, agent, &belief, prefs, config, e, &mut rng)?;
        belief = last;
        if config.mode.learns() {
            update_preferences(&mut counts, &base, window.as_mut(), &log, config)?;
        }
        snapshots.push(counts.clone());
        episodes.push(log);
    }
    Ok(RunLog {
        episodes,
        snapshots,
        fingerprint: format!("{config:?}|{env_config:?}|{seed}"),
    })
}

/// Recomputes every snapshot from the logged events.
pub fn replay_snapshots(log: &RunLog, config: &PepperConfig, n: usize) -> Result<Vec<DirichletCounts>> {
    let base = DirichletCounts::uniform(n);
    let mut counts = base.clone();
    let mut window = config.window.map(PreferenceWindow::new).transpose()?;
    let mut out = vec![counts.clone()];
    for ep in &log.episodes {
        if config.mode.learns() {
            update_preferences(&mut counts, &base, window.as_mut(), ep, config)?;
        }
        out.push(counts.clone());
    }
    Ok(out)
}

/// Column order of the per-episode CSV.
pub const EPISODE_COLUMNS: [&str; 14] = [
    "step",
    "row",
    "col",
    "action",
    "obs",
    "reward_cat",
    "map_id",
    "prior_entropy",
    "posterior_entropy",
    "posterior_argmax",
    "efe_extrinsic",
    "efe_state_ig",
    "efe_param_ig",
    "efe_total",
];

pub fn write_episode_csv<W: Write>(writer: W, log: &EpisodeLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EPISODE_COLUMNS)?;
    for r in log.records() {
        let efe = r.efe.as_ref();
        let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        w.write_record([
            r.step_index.to_string(),
            r.position.0.to_string(),
            r.position.1.to_string(),
            r.action.map_or(String::new(), |a| a.index().to_string()),
            r.obs.to_string(),
            r.reward_cat.to_string(),
            r.map_id.to_string(),
            r.prior.entropy().to_string(),
            r.posterior.entropy().to_string(),
            r.posterior.argmax().to_string(),
            f(efe.map(|b| b.extrinsic)),
            f(efe.map(|b| b.state_info_gain)),
            f(efe.map(|b| b.param_info_gain)),
            f(efe.map(|b| b.total)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed row of an episode CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub step: usize,
    pub position: (usize, usize),
    pub action: Option<usize>,
    pub obs: usize,
    pub reward_cat: usize,
    pub map_id: u64,
    pub prior_entropy: f64,
    pub posterior_entropy: f64,
    pub posterior_argmax: usize,
    pub efe_total: Option<f64>,
}

pub fn read_episode_csv<R: Read>(reader: R) -> Result<Vec<EpisodeRow>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(EPISODE_COLUMNS) {
        return Err(Error::parse(1, "unexpected episode header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let int = |k: usize| rec[k].parse::<usize>().map_err(|_| Error::parse(line, format!("bad `{}`", EPISODE_COLUMNS[k])));
        let float = |k: usize| rec[k].parse::<f64>().map_err(|_| Error::parse(line, format!("bad `{}`", EPISODE_COLUMNS[k])));
        let action = if rec[3].is_empty() {
            None
        } else {
            let a = int(3)?;
            if a >= Action::COUNT {
                return Err(Error::parse(line, "action out of range"));
            }
            Some(a)
        };
        let reward_cat = int(5)?;
        if reward_cat >= N_REWARD {
            return Err(Error::parse(line, "reward category out of range"));
        }
        rows.push(EpisodeRow {
            step: int(0)?,
            position: (int(1)?, int(2)?),
            action,
            obs: int(4)?,
            reward_cat,
            map_id: rec[6].parse().map_err(|_| Error::parse(line, "bad `map_id`"))?,
            prior_entropy: float(7)?,
            posterior_entropy: float(8)?,
            posterior_argmax: int(9)?,
            efe_total: if rec[13].is_empty() { None } else { Some(float(13)?) },
        });
    }
    Ok(rows)
}
