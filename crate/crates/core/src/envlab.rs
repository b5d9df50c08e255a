//! FrozenLake-style gridworld with sub-goal tiles, categorical reward
//! observations and scheduled map regeneration.
//!
//! The environment never emits a scalar reward to the agent: the tile
//! category under the agent is returned as an observation (`reward_cat`), and
//! [`reward_value`] exists only for reporting.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::{seeded, PepperRng};
use crate::{Error, Result};

/// Attempts before [`generate_map`] gives up on producing a connected map.
pub const MAX_MAP_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TileKind {
    Frozen,
    Hole,
    Goal,
    SubGoal,
}

impl TileKind {
    pub const ALL: [TileKind; 4] = [TileKind::Frozen, TileKind::Hole, TileKind::Goal, TileKind::SubGoal];

    /// Reward category index observed by the agent.
    pub fn category(self) -> usize {
        self as usize
    }

    pub fn from_category(cat: usize) -> Option<TileKind> {
        TileKind::ALL.get(cat).copied()
    }

    pub fn symbol(self) -> char {
        match self {
            TileKind::Frozen => 'F',
            TileKind::Hole => 'H',
            TileKind::Goal => 'G',
            TileKind::SubGoal => 'S',
        }
    }

    pub fn from_symbol(c: char) -> Option<TileKind> {
        match c {
            'F' => Some(TileKind::Frozen),
            'H' => Some(TileKind::Hole),
            'G' => Some(TileKind::Goal),
            'S' => Some(TileKind::SubGoal),
            _ => None,
        }
    }
}

/// Scalar value of a reward category, used for reports only.
///
/// The sub-goal magnitude is a free constant; the agent only ever sees the
/// category.
pub fn reward_value(reward_cat: usize) -> Result<f64> {
    match TileKind::from_category(reward_cat) {
        Some(TileKind::Frozen) => Ok(0.0),
        Some(TileKind::Hole) => Ok(-0.25),
        Some(TileKind::Goal) => Ok(10.0),
        Some(TileKind::SubGoal) => Ok(1.0),
        None => Err(Error::RewardCategory(reward_cat)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileMap {
    width: usize,
    height: usize,
    cells: Vec<TileKind>,
    pub map_id: u64,
}

impl TileMap {
    /// Builds a map from row-major cells, checking the tile-count invariants.
    pub fn from_cells(width: usize, height: usize, cells: Vec<TileKind>, map_id: u64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("map dimensions must be positive".into()));
        }
        if cells.len() != width * height {
            return Err(Error::Dimension {
                what: "map cells",
                expected: width * height,
                found: cells.len(),
            });
        }
        let map = TileMap {
            width,
            height,
            cells,
            map_id,
        };
        let counts = map.counts();
        if counts[TileKind::Goal.category()] == 0 || counts[TileKind::SubGoal.category()] == 0 {
            return Err(Error::InvalidParameter("map needs a goal and a sub-goal tile".into()));
        }
        let frozen = counts[TileKind::Frozen.category()];
        if counts.iter().enumerate().any(|(k, &c)| k != 0 && c >= frozen) {
            return Err(Error::InvalidParameter("frozen must be the majority tile".into()));
        }
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[TileKind] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> TileKind {
        self.cells[row * self.width + col]
    }

    /// Tile at a signed coordinate; out-of-bounds cells read as holes.
    pub fn get_padded(&self, row: isize, col: isize) -> TileKind {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            TileKind::Hole
        } else {
            self.get(row as usize, col as usize)
        }
    }

    pub fn position_index(&self, (row, col): (usize, usize)) -> usize {
        row * self.width + col
    }

    pub fn counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for tile in &self.cells {
            counts[tile.category()] += 1;
        }
        counts
    }

    fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (row, col) = (idx / self.width, idx % self.width);
        Action::ALL.iter().filter_map(move |a| {
            let (dr, dc) = a.delta();
            let r = row as isize + dr;
            let c = col as isize + dc;
            (r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width)
                .then(|| r as usize * self.width + c as usize)
        })
    }

    /// True when every frozen cell reaches a goal through non-hole cells.
    pub fn frozen_connected(&self) -> bool {
        let mut seen = vec![false; self.cells.len()];
        let mut queue: VecDeque<usize> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == TileKind::Goal)
            .map(|(i, _)| i)
            .collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(i) = queue.pop_front() {
            for n in self.neighbours(i) {
                if !seen[n] && self.cells[n] != TileKind::Hole {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        self.cells
            .iter()
            .zip(&seen)
            .all(|(t, s)| *t != TileKind::Frozen || *s)
    }

    /// Text form: header `width height map_id`, then one `F/H/G/S` row per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.map_id);
        for row in self.cells.chunks(self.width) {
            out.extend(row.iter().map(|t| t.symbol()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Empty("map text"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(1, "header must be `width height map_id`"));
        }
        let width: usize = fields[0].parse().map_err(|_| Error::parse(1, "bad width"))?;
        let height: usize = fields[1].parse().map_err(|_| Error::parse(1, "bad height"))?;
        let map_id: u64 = fields[2].parse().map_err(|_| Error::parse(1, "bad map_id"))?;
        if width == 0 || height == 0 || width.saturating_mul(height) > 1 << 20 {
            return Err(Error::parse(1, "unsupported map dimensions"));
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut rows = 0;
        for (n, line) in lines {
            let line = line.trim();
            if rows == height {
                return Err(Error::parse(n + 1, "more rows than the header declares"));
            }
            if line.chars().count() != width {
                return Err(Error::parse(n + 1, format!("row must have {width} tiles")));
            }
            for c in line.chars() {
                cells.push(TileKind::from_symbol(c).ok_or_else(|| Error::parse(n + 1, format!("unknown tile {c:?}")))?);
            }
            rows += 1;
        }
        if rows != height {
            return Err(Error::parse(rows + 2, format!("expected {height} rows, found {rows}")));
        }
        TileMap::from_cells(width, height, cells, map_id)
    }
}

impl fmt::Display for TileMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Generator parameters, shared by the initial map and every regeneration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapParams {
    pub width: usize,
    pub height: usize,
    pub hole_fraction: f64,
    pub n_subgoals: usize,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            width: 16,
            height: 16,
            hole_fraction: 0.15,
            n_subgoals: 1,
        }
    }
}

impl MapParams {
    pub fn n_holes(&self) -> usize {
        (self.hole_fraction * (self.width * self.height) as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.width * self.height;
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("map dimensions must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.hole_fraction) {
            return Err(Error::InvalidParameter(format!(
                "hole_fraction {} outside [0, 0.5)",
                self.hole_fraction
            )));
        }
        if self.n_subgoals == 0 {
            return Err(Error::InvalidParameter("at least one sub-goal is required".into()));
        }
        let special = self.n_holes() + 1 + self.n_subgoals;
        if special >= cells || cells - special <= self.n_holes().max(self.n_subgoals) {
            return Err(Error::InvalidParameter(format!(
                "{}x{} map cannot keep frozen tiles in the majority",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Draws a map with one goal, `n_subgoals` sub-goals and
/// `floor(hole_fraction * cells)` holes. Cell `(0, 0)` is always frozen so a
/// fixed start position is valid. Disconnected draws are rejected.
pub fn generate_map<R: Rng + ?Sized>(rng: &mut R, params: &MapParams) -> Result<TileMap> {
    generate_map_bounded(rng, params, MAX_MAP_ATTEMPTS)
}

pub fn generate_map_bounded<R: Rng + ?Sized>(rng: &mut R, params: &MapParams, attempts: usize) -> Result<TileMap> {
    params.validate()?;
    let cells = params.width * params.height;
    let mut candidates: Vec<usize> = (1..cells).collect();
    for _ in 0..attempts {
        candidates.shuffle(rng);
        let mut tiles = vec![TileKind::Frozen; cells];
        let mut picks = candidates.iter().copied();
        tiles[picks.next().expect("validated size")] = TileKind::Goal;
        for idx in picks.by_ref().take(params.n_subgoals) {
            tiles[idx] = TileKind::SubGoal;
        }
        for idx in picks.take(params.n_holes()) {
            tiles[idx] = TileKind::Hole;
        }
        let map = TileMap::from_cells(params.width, params.height, tiles, 0)?;
        if map.frozen_connected() {
            return Ok(map);
        }
    }
    Err(Error::InfeasibleMap { attempts })
}

/// How often the map is regenerated and whether episodes respawn the agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VolatilitySchedule {
    pub reset_every: Option<u32>,
    pub respawn_on_episode_start: bool,
}

impl VolatilitySchedule {
    pub const STATIC: VolatilitySchedule = VolatilitySchedule {
        reset_every: None,
        respawn_on_episode_start: false,
    };

    /// Canonical levels: 0% static, 25% every 40 steps, 50% every 20,
    /// 75% every 10, 100% every step.
    pub fn from_percent(percent: u32) -> Result<Self> {
        let reset_every = match percent {
            0 => return Ok(Self::STATIC),
            25 => 40,
            50 => 20,
            75 => 10,
            100 => 1,
            other => return Err(Error::InvalidParameter(format!("volatility level {other}% is not canonical"))),
        };
        Ok(VolatilitySchedule {
            reset_every: Some(reset_every),
            respawn_on_episode_start: true,
        })
    }

    pub fn every(k: u32) -> Self {
        VolatilitySchedule {
            reset_every: Some(k),
            respawn_on_episode_start: true,
        }
    }

    fn due(&self, step_index: u64) -> bool {
        matches!(self.reset_every, Some(k) if step_index > 0 && step_index % k as u64 == 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Left,
    Right,
    Down,
    Up,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Left, Action::Right, Action::Down, Action::Up];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// `(d_row, d_col)`; rows grow downwards.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Down => (1, 0),
            Action::Up => (-1, 0),
        }
    }
}

/// Symbol alphabet handed to the world model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObsEncoding {
    /// The position index alone; `width * height` symbols.
    Position,
    /// Position and 3x3 patch hashed into `n_obs` buckets.
    PositionPatch { n_obs: usize },
}

impl ObsEncoding {
    pub fn n_symbols(&self, params: &MapParams) -> usize {
        match *self {
            ObsEncoding::Position => params.width * params.height,
            ObsEncoding::PositionPatch { n_obs } => n_obs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub position_index: usize,
    /// Row-major 3x3 window centred on the agent.
    pub local_patch: [TileKind; 9],
    pub reward_cat: usize,
}

impl Observation {
    pub fn symbol(&self, encoding: ObsEncoding) -> usize {
        match encoding {
            ObsEncoding::Position => self.position_index,
            ObsEncoding::PositionPatch { n_obs } => {
                // FNV-1a keeps the hash stable across toolchains.
                let mut h: u64 = 0xcbf2_9ce4_8422_2325;
                let bytes = (self.position_index as u64)
                    .to_le_bytes()
                    .into_iter()
                    .chain(self.local_patch.iter().map(|t| t.category() as u8));
                for b in bytes {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
                (h % n_obs as u64) as usize
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub map: MapParams,
    pub schedule: VolatilitySchedule,
    pub start: (usize, usize),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            map: MapParams::default(),
            schedule: VolatilitySchedule::STATIC,
            start: (0, 0),
        }
    }
}

/// Environment state. Owns its random stream so that map regeneration inside
/// [`Env::step`] is reproducible.
#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    map: TileMap,
    agent_pos: (usize, usize),
    step_index: u64,
    rng: PepperRng,
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let map = generate_map(&mut rng, &config.map)?;
        Env::with_map(config, map, rng)
    }

    /// Starts from a hand-built map (tests, replay of saved maps).
    pub fn from_map(config: EnvConfig, map: TileMap, seed: u64) -> Result<Self> {
        Env::with_map(config, map, seeded(seed))
    }

    fn with_map(mut config: EnvConfig, map: TileMap, rng: PepperRng) -> Result<Self> {
        config.map.width = map.width();
        config.map.height = map.height();
        if config.start.0 >= map.height() || config.start.1 >= map.width() {
            return Err(Error::InvalidParameter("start position outside the map".into()));
        }
        if matches!(config.schedule.reset_every, Some(0)) {
            return Err(Error::InvalidParameter("reset_every must be at least 1".into()));
        }
        Ok(Env {
            agent_pos: config.start,
            config,
            map,
            step_index: 0,
            rng,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn map(&self) -> &TileMap {
        &self.map
    }

    pub fn position(&self) -> (usize, usize) {
        self.agent_pos
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Starts an episode: fixed start when the schedule is static, otherwise
    /// a uniformly drawn frozen cell.
    pub fn reset(&mut self) -> Observation {
        self.step_index = 0;
        self.agent_pos = if self.config.schedule.respawn_on_episode_start {
            let frozen: Vec<usize> = self
                .map
                .cells()
                .iter()
                .enumerate()
                .filter(|(_, t)| **t == TileKind::Frozen)
                .map(|(i, _)| i)
                .collect();
            let idx = frozen[self.rng.random_range(0..frozen.len())];
            (idx / self.map.width(), idx % self.map.width())
        } else {
            self.config.start
        };
        self.observe()
    }

    /// Regenerates the map when the schedule is due at the current step.
    /// The agent keeps its position.
    pub fn apply_volatility(&mut self) -> bool {
        if !self.config.schedule.due(self.step_index) {
            return false;
        }
        let mut next = generate_map(&mut self.rng, &self.config.map)
            .expect("generator parameters were validated when the environment was built");
        next.map_id = self.map.map_id + 1;
        self.map = next;
        self.agent_pos = (
            self.agent_pos.0.min(self.map.height() - 1),
            self.agent_pos.1.min(self.map.width() - 1),
        );
        true
    }

    pub fn step(&mut self, action: Action) -> Observation {
        self.step_index += 1;
        self.apply_volatility();
        let (dr, dc) = action.delta();
        let row = self.agent_pos.0 as isize + dr;
        let col = self.agent_pos.1 as isize + dc;
        if row >= 0 && col >= 0 && (row as usize) < self.map.height() && (col as usize) < self.map.width() {
            self.agent_pos = (row as usize, col as usize);
        }
        self.observe()
    }

    pub fn observe(&self) -> Observation {
        let (row, col) = (self.agent_pos.0 as isize, self.agent_pos.1 as isize);
        let mut local_patch = [TileKind::Hole; 9];
        for (k, tile) in local_patch.iter_mut().enumerate() {
            *tile = self.map.get_padded(row + k as isize / 3 - 1, col + k as isize % 3 - 1);
        }
        Observation {
            position_index: self.map.position_index(self.agent_pos),
            local_patch,
            reward_cat: self.map.get(self.agent_pos.0, self.agent_pos.1).category(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(w: usize, h: usize, holes: f64) -> MapParams {
        MapParams {
            width: w,
            height: h,
            hole_fraction: holes,
            n_subgoals: 1,
        }
    }

    /// Independent BFS over the raw cells, from each frozen cell outwards.
    fn reaches_goal(map: &TileMap, start: usize) -> bool {
        let (w, h) = (map.width(), map.height());
        let mut seen = vec![false; w * h];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            if map.cells()[i] == TileKind::Goal {
                return true;
            }
            let (r, c) = (i / w, i % w);
            let mut next = Vec::new();
            if r > 0 {
                next.push(i - w);
            }
            if r + 1 < h {
                next.push(i + w);
            }
            if c > 0 {
                next.push(i - 1);
            }
            if c + 1 < w {
                next.push(i + 1);
            }
            for n in next {
                if !seen[n] && map.cells()[n] != TileKind::Hole {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        false
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_map(&mut seeded(7), &params(16, 16, 0.15)).unwrap();
        let b = generate_map(&mut seeded(7), &params(16, 16, 0.15)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hole_free_map_counts() {
        let map = generate_map(&mut seeded(11), &params(16, 16, 0.0)).unwrap();
        assert_eq!(map.counts(), [254, 0, 1, 1]);
    }

    #[test]
    fn small_maps_are_connected() {
        for seed in 0..50 {
            let map = generate_map(&mut seeded(seed), &params(4, 4, 0.2)).unwrap();
            assert_eq!(map.counts()[1], 3);
            for (i, t) in map.cells().iter().enumerate() {
                if *t == TileKind::Frozen {
                    assert!(reaches_goal(&map, i), "seed {seed} cell {i}\n{map}");
                }
            }
        }
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        assert!(generate_map(&mut seeded(0), &params(16, 16, 0.5)).is_err());
        assert!(generate_map(&mut seeded(0), &params(2, 1, 0.0)).is_err());
        let mut p = params(8, 8, 0.1);
        p.n_subgoals = 0;
        assert!(generate_map(&mut seeded(0), &p).is_err());
        // A corridor with holes rarely connects on the first draw.
        let corridor = params(12, 1, 0.25);
        let failures = (0..20)
            .filter(|&s| {
                matches!(
                    generate_map_bounded(&mut seeded(s), &corridor, 1),
                    Err(Error::InfeasibleMap { attempts: 1 })
                )
            })
            .count();
        assert!(failures > 0);
    }

    #[test]
    fn reward_values() {
        assert_eq!(reward_value(TileKind::Goal.category()).unwrap(), 10.0);
        assert_eq!(reward_value(TileKind::Hole.category()).unwrap(), -0.25);
        assert_eq!(reward_value(TileKind::SubGoal.category()).unwrap(), 1.0);
        assert_eq!(reward_value(TileKind::Frozen.category()).unwrap(), 0.0);
        assert!(reward_value(4).is_err());
    }

    #[test]
    fn boundary_moves_clamp() {
        let mut env = Env::new(EnvConfig::default(), 1).unwrap();
        env.reset();
        assert_eq!(env.position(), (0, 0));
        env.step(Action::Left);
        assert_eq!(env.position(), (0, 0));
        env.step(Action::Up);
        assert_eq!(env.position(), (0, 0));
        assert_eq!(env.step_index(), 2);
    }

    #[test]
    fn stepping_onto_goal_reports_goal_category() {
        assert!(matches!(TileMap::from_text("3 1 0\nFGS\n"), Err(Error::InvalidParameter(_))));
        let map = TileMap::from_text("5 1 0\nFFFGS\n").unwrap();
        let config = EnvConfig {
            start: (0, 2),
            ..EnvConfig::default()
        };
        let mut env = Env::from_map(config, map, 0).unwrap();
        assert_eq!(env.reset().reward_cat, TileKind::Frozen.category());
        let obs = env.step(Action::Right);
        assert_eq!(obs.reward_cat, TileKind::Goal.category());
        assert_eq!(obs.position_index, 3);
    }

    #[test]
    fn static_reset_uses_fixed_start() {
        let mut env = Env::new(EnvConfig::default(), 5).unwrap();
        for _ in 0..5 {
            let obs = env.reset();
            assert_eq!(obs.position_index, 0);
            assert_eq!(env.step_index(), 0);
            env.step(Action::Right);
        }
    }

    #[test]
    fn volatile_reset_respawns() {
        let config = EnvConfig {
            schedule: VolatilitySchedule::from_percent(50).unwrap(),
            ..EnvConfig::default()
        };
        let starts: Vec<usize> = (0..20)
            .map(|seed| Env::new(config, seed).unwrap().reset().position_index)
            .collect();
        let mut distinct = starts.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert!(distinct.len() > 1);
        let mut env = Env::new(config, 3).unwrap();
        env.reset();
        assert_eq!(env.step_index(), 0);
        let pos = env.position();
        assert_eq!(env.map().get(pos.0, pos.1), TileKind::Frozen);
    }

    #[test]
    fn every_step_volatility_changes_map_each_step() {
        let config = EnvConfig {
            schedule: VolatilitySchedule::from_percent(100).unwrap(),
            ..EnvConfig::default()
        };
        let mut env = Env::new(config, 9).unwrap();
        env.reset();
        for expected in 1..=10 {
            env.step(Action::Down);
            assert_eq!(env.map().map_id, expected);
        }
    }

    #[test]
    fn volatility_counts() {
        let mut env = Env::new(
            EnvConfig {
                schedule: VolatilitySchedule::every(40),
                ..EnvConfig::default()
            },
            2,
        )
        .unwrap();
        env.reset();
        let before = env.map().map_id;
        for _ in 0..50 {
            env.step(Action::Right);
        }
        assert_eq!(env.map().map_id - before, 1);

        let mut env = Env::new(
            EnvConfig {
                schedule: VolatilitySchedule::every(20),
                ..EnvConfig::default()
            },
            2,
        )
        .unwrap();
        env.reset();
        env.step_index = 20;
        assert!(env.apply_volatility());
        env.step_index = 21;
        assert!(!env.apply_volatility());

        let mut env = Env::new(EnvConfig::default(), 2).unwrap();
        env.reset();
        for _ in 0..200 {
            env.step(Action::Down);
            assert!(!env.apply_volatility());
            assert_eq!(env.map().map_id, 0);
        }
    }

    #[test]
    fn patch_pads_with_holes() {
        let mut env = Env::new(EnvConfig::default(), 4).unwrap();
        let obs = env.reset();
        assert_eq!(&obs.local_patch[..3], &[TileKind::Hole; 3]);
        assert_eq!(obs.local_patch[3], TileKind::Hole);
        assert_eq!(obs.local_patch[4], env.map().get(0, 0));
        let a = obs.symbol(ObsEncoding::PositionPatch { n_obs: 97 });
        assert!(a < 97);
        assert_eq!(a, env.observe().symbol(ObsEncoding::PositionPatch { n_obs: 97 }));
    }

    #[test]
    fn text_round_trip() {
        let map = generate_map(&mut seeded(21), &params(6, 5, 0.2)).unwrap();
        let text = map.to_text();
        assert_eq!(TileMap::from_text(&text).unwrap(), map);
        assert!(TileMap::from_text("2 2 0\nFG\n").is_err());
        assert!(TileMap::from_text("3 1 0\nFXS\n").is_err());
    }
}
