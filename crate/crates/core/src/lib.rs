//! Reward-free preference learning ("pepper") layered over an
//! expected-free-energy planner.
//!
//! The crate is organised bottom-up:
//!
//! - [`envlab`]: procedural FrozenLake-style gridworld with sub-goal tiles and
//!   scheduled map volatility.
//! - [`worldmodel`]: discrete categorical generative model with exact
//!   filtering, ELBO / log-evidence, Baum-Welch fitting and bootstrap ensembles.
//! - [`preferences`]: Dirichlet pseudo-count stores for reward and state
//!   preferences.
//! - [`efe`]: expected free energy, plain and preference-augmented.
//! - [`planner`]: random-shooting receding-horizon planner.
//! - [`pepper`]: the two-timescale act/accumulate loop.
//! - [`metrics`]: Hausdorff divergence, PCA, k-means and belief variance.

pub mod dist;
pub mod efe;
pub mod envlab;
mod error;
pub mod metrics;
pub mod pepper;
pub mod planner;
pub mod preferences;
pub mod rng;
pub mod worldmodel;

pub use dist::{Belief, Categorical};
pub use efe::{EfeBreakdown, PreferenceMode, RolloutMode};
pub use envlab::{Action, Env, EnvConfig, Observation, TileKind, TileMap, VolatilitySchedule};
pub use error::{Error, Result};
pub use pepper::{Agent, EpisodeLog, PepperConfig, RunLog};
pub use planner::{PlannerConfig, PolicyCandidate};
pub use preferences::{DirichletCounts, PreferenceWindow};
pub use worldmodel::{Ensemble, Trajectory, WorldModel};

/// Number of reward categories (one per tile kind).
pub const N_REWARD: usize = 4;
