//! Flat `section.key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pepper_core::efe::PriorSource;
use pepper_core::envlab::{MapParams, ObsEncoding};
use pepper_core::pepper::PepperConfig;
use pepper_core::planner::PlannerConfig;
use pepper_core::worldmodel::{EmOptions, ModelDims};
use pepper_core::{PreferenceMode, RolloutMode, VolatilitySchedule, N_REWARD};

/// Prefix of environment variables that override config keys.
/// `PEPPER_PEPPER__ALPHA=0.5` sets `pepper.alpha`.
pub const ENV_PREFIX: &str = "PEPPER_";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{}`{key}`: {msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Field {
        line: Option<usize>,
        key: String,
        msg: String,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObsMode {
    Position,
    Patch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvBlock {
    pub width: usize,
    pub height: usize,
    pub hole_fraction: f64,
    pub subgoals: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBlock {
    pub n_states: usize,
    pub obs: ObsMode,
    /// Alphabet size for the hashed patch encoding.
    pub patch_symbols: usize,
    pub em_iters: usize,
    pub smoothing: f64,
    pub tolerance: f64,
    pub ensemble: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainBlock {
    pub trajectories: usize,
    pub length: usize,
    pub reset_every: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PepperBlock {
    pub modes: Vec<PreferenceMode>,
    pub episodes: usize,
    pub episode_len: usize,
    pub alpha: f64,
    pub window: Option<usize>,
    pub horizon: usize,
    pub candidates: usize,
    pub lambda: f64,
    pub prior_source: PriorSource,
    pub rollout: RolloutMode,
    pub include_reset: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixBlock {
    pub volatility: Vec<u32>,
    pub seeds: usize,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisBlock {
    pub clusters: usize,
    pub kmeans_iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvBlock,
    pub model: ModelBlock,
    pub pretrain: PretrainBlock,
    pub pepper: PepperBlock,
    pub matrix: MatrixBlock,
    pub analysis: AnalysisBlock,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let map = MapParams::default();
        let planner = PlannerConfig::default();
        let pepper = PepperConfig::default();
        let em = EmOptions::default();
        ExperimentConfig {
            env: EnvBlock {
                width: map.width,
                height: map.height,
                hole_fraction: map.hole_fraction,
                subgoals: map.n_subgoals,
            },
            model: ModelBlock {
                n_states: 64,
                obs: ObsMode::Position,
                patch_symbols: 1024,
                em_iters: em.n_iters,
                smoothing: em.smoothing,
                tolerance: em.tolerance,
                ensemble: pepper_core::worldmodel::DEFAULT_MEMBERS,
            },
            pretrain: PretrainBlock {
                trajectories: 200,
                length: 50,
                reset_every: 5,
            },
            pepper: PepperBlock {
                modes: PreferenceMode::ALL.to_vec(),
                episodes: pepper.episodes,
                episode_len: pepper.episode_len,
                alpha: pepper.alpha,
                window: pepper.window,
                horizon: planner.horizon,
                candidates: planner.candidates,
                lambda: planner.lambda,
                prior_source: planner.prior_source,
                rollout: planner.rollout,
                include_reset: pepper.include_reset_event,
            },
            matrix: MatrixBlock {
                volatility: vec![0, 25, 50, 75, 100],
                seeds: 10,
                master_seed: 0,
            },
            analysis: AnalysisBlock {
                clusters: 3,
                kmeans_iters: 100,
            },
            out_dir: PathBuf::from("results"),
        }
    }
}

/// Every accepted key, in dump order.
pub const KEYS: &[&str] = &[
    "env.width",
    "env.height",
    "env.hole_fraction",
    "env.subgoals",
    "model.n_states",
    "model.obs",
    "model.patch_symbols",
    "model.em_iters",
    "model.smoothing",
    "model.tolerance",
    "model.ensemble",
    "pretrain.trajectories",
    "pretrain.length",
    "pretrain.reset_every",
    "pepper.modes",
    "pepper.episodes",
    "pepper.episode_len",
    "pepper.alpha",
    "pepper.window",
    "pepper.horizon",
    "pepper.candidates",
    "pepper.lambda",
    "pepper.prior_source",
    "pepper.rollout",
    "pepper.include_reset",
    "matrix.volatility",
    "matrix.seeds",
    "matrix.master_seed",
    "analysis.clusters",
    "analysis.kmeans_iters",
    "io.out_dir",
];

fn parse<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {value:?}")),
    }
}

fn list<T>(value: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    value.split(',').map(|s| item(s.trim())).collect()
}

pub fn parse_mode(s: &str) -> Result<PreferenceMode, String> {
    PreferenceMode::from_name(s).ok_or_else(|| format!("unknown mode {s:?} (plain, reward-pref, state-pref)"))
}

fn rollout_name(r: RolloutMode) -> &'static str {
    match r {
        RolloutMode::Sample => "sample",
        RolloutMode::Expectation => "expectation",
    }
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "env.width" => self.env.width = parse(v)?,
            "env.height" => self.env.height = parse(v)?,
            "env.hole_fraction" => self.env.hole_fraction = parse(v)?,
            "env.subgoals" => self.env.subgoals = parse(v)?,
            "model.n_states" => self.model.n_states = parse(v)?,
            "model.obs" => {
                self.model.obs = match v {
                    "position" => ObsMode::Position,
                    "patch" => ObsMode::Patch,
                    _ => return Err(format!("expected position or patch, got {v:?}")),
                }
            }
            "model.patch_symbols" => self.model.patch_symbols = parse(v)?,
            "model.em_iters" => self.model.em_iters = parse(v)?,
            "model.smoothing" => self.model.smoothing = parse(v)?,
            "model.tolerance" => self.model.tolerance = parse(v)?,
            "model.ensemble" => self.model.ensemble = parse(v)?,
            "pretrain.trajectories" => self.pretrain.trajectories = parse(v)?,
            "pretrain.length" => self.pretrain.length = parse(v)?,
            "pretrain.reset_every" => self.pretrain.reset_every = parse(v)?,
            "pepper.modes" => self.pepper.modes = list(v, parse_mode)?,
            "pepper.episodes" => self.pepper.episodes = parse(v)?,
            "pepper.episode_len" => self.pepper.episode_len = parse(v)?,
            "pepper.alpha" => self.pepper.alpha = parse(v)?,
            "pepper.window" => self.pepper.window = if v == "none" { None } else { Some(parse(v)?) },
            "pepper.horizon" => self.pepper.horizon = parse(v)?,
            "pepper.candidates" => self.pepper.candidates = parse(v)?,
            "pepper.lambda" => self.pepper.lambda = parse(v)?,
            "pepper.prior_source" => {
                self.pepper.prior_source =
                    PriorSource::from_name(v).ok_or_else(|| format!("expected thompson or expected-log, got {v:?}"))?
            }
            "pepper.rollout" => {
                self.pepper.rollout = match v {
                    "sample" => RolloutMode::Sample,
                    "expectation" => RolloutMode::Expectation,
                    _ => return Err(format!("expected sample or expectation, got {v:?}")),
                }
            }
            "pepper.include_reset" => self.pepper.include_reset = parse_bool(v)?,
            "matrix.volatility" => self.matrix.volatility = list(v, parse)?,
            "matrix.seeds" => self.matrix.seeds = parse(v)?,
            "matrix.master_seed" => self.matrix.master_seed = parse(v)?,
            "analysis.clusters" => self.analysis.clusters = parse(v)?,
            "analysis.kmeans_iters" => self.analysis.kmeans_iters = parse(v)?,
            "io.out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let join = |xs: Vec<String>| xs.join(",");
        Some(match key {
            "env.width" => self.env.width.to_string(),
            "env.height" => self.env.height.to_string(),
            "env.hole_fraction" => self.env.hole_fraction.to_string(),
            "env.subgoals" => self.env.subgoals.to_string(),
            "model.n_states" => self.model.n_states.to_string(),
            "model.obs" => match self.model.obs {
                ObsMode::Position => "position".into(),
                ObsMode::Patch => "patch".into(),
            },
            "model.patch_symbols" => self.model.patch_symbols.to_string(),
            "model.em_iters" => self.model.em_iters.to_string(),
            "model.smoothing" => self.model.smoothing.to_string(),
            "model.tolerance" => self.model.tolerance.to_string(),
            "model.ensemble" => self.model.ensemble.to_string(),
            "pretrain.trajectories" => self.pretrain.trajectories.to_string(),
            "pretrain.length" => self.pretrain.length.to_string(),
            "pretrain.reset_every" => self.pretrain.reset_every.to_string(),
            "pepper.modes" => join(self.pepper.modes.iter().map(|m| m.name().to_string()).collect()),
            "pepper.episodes" => self.pepper.episodes.to_string(),
            "pepper.episode_len" => self.pepper.episode_len.to_string(),
            "pepper.alpha" => self.pepper.alpha.to_string(),
            "pepper.window" => self.pepper.window.map_or("none".into(), |w| w.to_string()),
            "pepper.horizon" => self.pepper.horizon.to_string(),
            "pepper.candidates" => self.pepper.candidates.to_string(),
            "pepper.lambda" => self.pepper.lambda.to_string(),
            "pepper.prior_source" => self.pepper.prior_source.name().to_string(),
            "pepper.rollout" => rollout_name(self.pepper.rollout).to_string(),
            "pepper.include_reset" => self.pepper.include_reset.to_string(),
            "matrix.volatility" => join(self.matrix.volatility.iter().map(u32::to_string).collect()),
            "matrix.seeds" => self.matrix.seeds.to_string(),
            "matrix.master_seed" => self.matrix.master_seed.to_string(),
            "analysis.clusters" => self.analysis.clusters.to_string(),
            "analysis.kmeans_iters" => self.analysis.kmeans_iters.to_string(),
            "io.out_dir" => self.out_dir.display().to_string(),
            _ => return None,
        })
    }

    /// Parses config text over the defaults. Does not validate.
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax {
                line,
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Field {
                    line: Some(line),
                    key: key.into(),
                    msg: "duplicate key".into(),
                });
            }
            config.set(key, value).map_err(|msg| ConfigError::Field {
                line: Some(line),
                key: key.into(),
                msg,
            })?;
        }
        Ok(config)
    }

    /// Parses and validates.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let config = Self::parse_text(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Self::from_text(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    /// Applies `PEPPER_SECTION__KEY` variables. Unrelated `PEPPER_` variables
    /// that do not name a section are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.as_ref().strip_prefix(ENV_PREFIX)?;
                let (section, key) = rest.split_once("__")?;
                Some((format!("{}.{}", section.to_lowercase(), key.to_lowercase()), v.as_ref().to_string()))
            })
            .collect();
        pairs.sort();
        for (key, value) in pairs {
            self.set(&key, &value).map_err(|msg| ConfigError::Field { line: None, key, msg })?;
        }
        Ok(())
    }

    /// Canonical text: every key, fixed order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let (s, _) = key.split_once('.').expect("keys are dotted");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed keys resolve"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |key: &str, msg: String| ConfigError::Field {
            line: None,
            key: key.into(),
            msg,
        };
        self.map_params().validate().map_err(|e| field("env", e.to_string()))?;
        if self.model.n_states < 2 {
            return Err(field("model.n_states", "at least 2 states are required".into()));
        }
        if self.model.obs == ObsMode::Patch && self.model.patch_symbols == 0 {
            return Err(field("model.patch_symbols", "must be positive".into()));
        }
        self.em_options().validate().map_err(|e| field("model", e.to_string()))?;
        if self.model.ensemble < 2 {
            return Err(field("model.ensemble", "an ensemble needs at least 2 members".into()));
        }
        if self.pretrain.trajectories == 0 || self.pretrain.length == 0 {
            return Err(field("pretrain", "trajectories and length must be positive".into()));
        }
        if self.pretrain.reset_every == 0 {
            return Err(field("pretrain.reset_every", "must be at least 1".into()));
        }
        if self.pepper.modes.is_empty() {
            return Err(field("pepper.modes", "at least one mode is required".into()));
        }
        for &mode in &self.pepper.modes {
            self.pepper_config(mode).validate().map_err(|e| {
                let key = if e.to_string().contains("alpha") {
                    "pepper.alpha"
                } else if e.to_string().contains("window") {
                    "pepper.window"
                } else {
                    "pepper"
                };
                field(key, format!("{} ({})", e, mode.name()))
            })?;
        }
        if self.matrix.volatility.is_empty() {
            return Err(field("matrix.volatility", "at least one level is required".into()));
        }
        for &v in &self.matrix.volatility {
            VolatilitySchedule::from_percent(v).map_err(|e| field("matrix.volatility", e.to_string()))?;
        }
        if self.matrix.seeds == 0 {
            return Err(field("matrix.seeds", "at least one seed is required".into()));
        }
        if self.analysis.clusters == 0 {
            return Err(field("analysis.clusters", "must be positive".into()));
        }
        Ok(())
    }

    pub fn map_params(&self) -> MapParams {
        MapParams {
            width: self.env.width,
            height: self.env.height,
            hole_fraction: self.env.hole_fraction,
            n_subgoals: self.env.subgoals,
        }
    }

    pub fn encoding(&self) -> ObsEncoding {
        match self.model.obs {
            ObsMode::Position => ObsEncoding::Position,
            ObsMode::Patch => ObsEncoding::PositionPatch {
                n_obs: self.model.patch_symbols,
            },
        }
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims {
            n_states: self.model.n_states,
            n_actions: pepper_core::Action::COUNT,
            n_obs: self.encoding().n_symbols(&self.map_params()),
            n_rewards: N_REWARD,
        }
    }

    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            n_iters: self.model.em_iters,
            smoothing: self.model.smoothing,
            tolerance: self.model.tolerance,
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            candidates: self.pepper.candidates,
            horizon: self.pepper.horizon,
            lambda: self.pepper.lambda,
            rollout: self.pepper.rollout,
            prior_source: self.pepper.prior_source,
        }
    }

    /// Loop settings for one mode.
    pub fn pepper_config(&self, mode: PreferenceMode) -> PepperConfig {
        PepperConfig {
            mode,
            episodes: self.pepper.episodes,
            episode_len: self.pepper.episode_len,
            alpha: self.pepper.alpha,
            window: self.pepper.window,
            include_reset_event: self.pepper.include_reset,
            planner: self.planner_config(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_text("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.pepper.horizon, 15);
        assert_eq!(c.pepper.episodes, 50);
        assert_eq!(c.pepper.episode_len, 50);
        assert_eq!(c.model.n_states, 64);
        assert_eq!(c.model_dims().n_rewards, 4);
        assert_eq!(c.matrix.seeds, 10);
        assert_eq!(c.pretrain.reset_every, 5);
        assert_eq!(c.model_dims().n_obs, 256);
    }

    #[test]
    fn negative_alpha_is_rejected() {
        match ExperimentConfig::from_text("pepper.alpha = -1\n") {
            Err(ConfigError::Field { key, .. }) => assert_eq!(key, "pepper.alpha"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagnostics_carry_lines() {
        let err = ExperimentConfig::from_text("# c\nenv.width = 8\nenv.colour = red\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Field {
                line: Some(3),
                key: "env.colour".into(),
                msg: "unknown key".into()
            }
        );
        assert!(matches!(
            ExperimentConfig::from_text("\n\nnot a pair\n"),
            Err(ConfigError::Syntax { line: 3, .. })
        ));
        assert!(ExperimentConfig::from_text("env.width = 8\nenv.width = 9\n").is_err());
        assert!(ExperimentConfig::from_text("matrix.volatility = 0,33\n").is_err());
    }

    #[test]
    fn dump_round_trips() {
        let text = "pepper.alpha = 0.5  # comment\nmatrix.volatility = 0, 50,100\npepper.window = 5\npepper.modes = state-pref\n";
        let c = ExperimentConfig::from_text(text).unwrap();
        let dumped = c.dump();
        let again = ExperimentConfig::from_text(&dumped).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.dump(), dumped);
        assert!(dumped.contains("matrix.volatility = 0,50,100\n"));
        assert_eq!(dumped.lines().filter(|l| l.contains('=')).count(), KEYS.len());
    }

    #[test]
    fn window_with_plain_is_rejected() {
        assert!(ExperimentConfig::from_text("pepper.window = 5\npepper.modes = plain\n").is_err());
        assert!(ExperimentConfig::from_text("pepper.window = 5\npepper.modes = plain,state-pref\n").is_err());
        assert!(ExperimentConfig::from_text("pepper.window = 5\npepper.modes = reward-pref,state-pref\n").is_ok());
    }

    #[test]
    fn env_overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_env([
            ("PEPPER_PEPPER__ALPHA", "0.25"),
            ("PEPPER_MATRIX__SEEDS", "3"),
            ("PEPPER_UNRELATED", "x"),
            ("HOME", "/root"),
        ])
        .unwrap();
        assert_eq!(c.pepper.alpha, 0.25);
        assert_eq!(c.matrix.seeds, 3);
        assert!(c.apply_env([("PEPPER_ENV__COLOUR", "red")]).is_err());
    }
}
