//! Gym-style obstacle-avoidance environment and tabular Q-learning.
//!
//! The arena wraps around at its edges, so obstacle density is the same
//! everywhere and an episode can only end by collision or by reaching the
//! step limit.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::action::{ActionThrusts, DiscreteAction};
use crate::geometry::{Pose2D, Vec2};
use crate::sim::{
    check_collision, sample_range_scan, step_dynamics, DynamicsParams, ObjectKind, Shape, SimError, VesselState,
    World, WorldObject,
};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("episode is over; call reset first")]
    EpisodeDone,
    #[error("environment has not been reset")]
    NotReset,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RewardParams {
    pub collision: f64,
    pub straight: f64,
    pub turn: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { collision: -100.0, straight: 1.0, turn: 0.2 }
    }
}

pub fn reward_fn(_observation: &[f64], action: DiscreteAction, collided: bool, params: &RewardParams) -> f64 {
    if collided {
        params.collision
    } else if action == DiscreteAction::GoStraight {
        params.straight
    } else {
        params.turn
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EnvConfig {
    /// Side of the square, wrap-around arena, m.
    pub arena_size: f64,
    /// Obstacles per square metre.
    pub obstacle_density: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Obstacle-free radius around the start, m.
    pub clear_radius: f64,
    pub n_beams: usize,
    /// Scan field of view centred on the heading, rad.
    pub fov: f64,
    pub max_range: f64,
    pub sectors: usize,
    /// Bucket edges for discretization, ascending, m.
    pub bin_edges: Vec<f64>,
    pub ticks_per_step: usize,
    pub step_limit: usize,
    pub thrusts: ActionThrusts,
    pub rewards: RewardParams,
    pub dynamics: DynamicsParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            arena_size: 40.0,
            obstacle_density: 0.016,
            radius_min: 0.3,
            radius_max: 0.8,
            clear_radius: 4.0,
            n_beams: 61,
            fov: 120.0_f64.to_radians(),
            max_range: 10.0,
            sectors: 5,
            bin_edges: alloc::vec![2.5, 5.0],
            ticks_per_step: 5,
            step_limit: 500,
            thrusts: ActionThrusts::pivoting(0.3, 0.6),
            rewards: RewardParams::default(),
            dynamics: DynamicsParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = AgentError::InvalidConfig;
        if !(self.arena_size.is_finite() && self.arena_size > 0.0) {
            return Err(bad("arena_size"));
        }
        if !(self.obstacle_density.is_finite() && self.obstacle_density >= 0.0) {
            return Err(bad("obstacle_density"));
        }
        if !(self.radius_min > 0.0 && self.radius_min <= self.radius_max && self.radius_max.is_finite()) {
            return Err(bad("obstacle radius bounds"));
        }
        if !(self.clear_radius.is_finite() && self.clear_radius >= 0.0) {
            return Err(bad("clear_radius"));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(bad("max_range"));
        }
        // Only the nearest periodic image of each obstacle is considered.
        if 0.5 * self.arena_size <= self.max_range + self.radius_max + self.dynamics.vessel_radius {
            return Err(bad("arena too small for max_range"));
        }
        if self.n_beams < 3 || self.sectors == 0 || self.sectors > self.n_beams {
            return Err(bad("beam or sector count"));
        }
        if !(self.fov.is_finite() && self.fov > 0.0) {
            return Err(bad("fov"));
        }
        if self.bin_edges.is_empty() || self.bin_edges.len() > 9 {
            return Err(bad("bin_edges must give 2 to 10 buckets"));
        }
        if !self.bin_edges.iter().all(|e| e.is_finite()) || self.bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("bin_edges must be strictly ascending"));
        }
        if self.ticks_per_step == 0 || self.step_limit == 0 {
            return Err(bad("ticks_per_step and step_limit must be positive"));
        }
        self.dynamics.validate()?;
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.bin_edges.len() + 1
    }

    /// Number of distinct discretized states.
    pub fn key_space(&self) -> usize {
        self.bins().pow(self.sectors as u32)
    }
}

/// Diagnostics attached to every step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StepInfo {
    pub step: usize,
    pub collided: bool,
    /// Step limit reached without a collision.
    pub success: bool,
    pub pose: Pose2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Reset/step contract shared by environments.
pub trait Environment {
    type Action;

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, AgentError>;
    fn step(&mut self, action: Self::Action) -> Result<AgentStep, AgentError>;
}

fn wrap_coord(v: f64, size: f64) -> f64 {
    v - size * libm::floor(v / size + 0.5)
}

#[derive(Debug, Clone)]
pub struct ObstacleEnv {
    pub config: EnvConfig,
    /// Obstacle discs in arena coordinates, `[-L/2, L/2)` on both axes.
    pub obstacles: Vec<(Vec2, f64)>,
    pub state: VesselState,
    steps: usize,
    done: bool,
    ready: bool,
}

impl ObstacleEnv {
    pub fn new(config: EnvConfig) -> Result<Self, AgentError> {
        config.validate()?;
        Ok(ObstacleEnv {
            config,
            obstacles: Vec::new(),
            state: VesselState::default(),
            steps: 0,
            done: false,
            ready: false,
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Obstacles as seen from the vessel: the nearest periodic image of
    /// every disc that could matter within sensor range.
    pub fn local_world(&self) -> World {
        let size = self.config.arena_size;
        let p = self.state.pose.position();
        let reach = self.config.max_range + self.config.radius_max + self.config.dynamics.vessel_radius;
        let objects = self
            .obstacles
            .iter()
            .enumerate()
            .filter_map(|(i, &(c, r))| {
                let d = Vec2::new(wrap_coord(c.x - p.x, size), wrap_coord(c.y - p.y, size));
                (d.norm() <= reach + r).then_some(WorldObject {
                    id: i as u32,
                    kind: ObjectKind::ObstacleBuoy,
                    shape: Shape::Circle { center: p + d, radius: r },
                    height: 1.0,
                })
            })
            .collect();
        World { objects }
    }

    pub fn observe(&self) -> Result<Vec<f64>, AgentError> {
        let c = &self.config;
        let scan = sample_range_scan(&self.local_world(), &self.state, c.n_beams, c.fov, c.max_range)?;
        Ok(scan.downsample(c.sectors))
    }

    fn in_collision(&self) -> bool {
        check_collision(&self.local_world(), &self.state, self.config.dynamics.vessel_radius)
    }
}

impl Environment for ObstacleEnv {
    type Action = DiscreteAction;

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, AgentError> {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 * c.arena_size;
        let count = libm::round(c.obstacle_density * c.arena_size * c.arena_size) as usize;
        let mut obstacles = Vec::with_capacity(count);
        for _ in 0..count {
            let r = rng.random_range(c.radius_min..=c.radius_max);
            for _ in 0..100 {
                let p = Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half));
                if p.norm() >= c.clear_radius + r {
                    obstacles.push((p, r));
                    break;
                }
            }
        }
        let yaw = rng.random_range(-PI..PI);
        self.obstacles = obstacles;
        self.state = VesselState::at_rest(Pose2D::new(0.0, 0.0, yaw));
        self.steps = 0;
        self.done = false;
        self.ready = true;
        self.observe()
    }

    fn step(&mut self, action: DiscreteAction) -> Result<AgentStep, AgentError> {
        if !self.ready {
            return Err(AgentError::NotReset);
        }
        if self.done {
            return Err(AgentError::EpisodeDone);
        }
        let cmd = self.config.thrusts.command(action);
        let size = self.config.arena_size;
        let mut collided = false;
        for _ in 0..self.config.ticks_per_step {
            let dyn_params = &self.config.dynamics;
            let mut next = step_dynamics(&self.state, cmd, dyn_params.dt, dyn_params)?;
            next.pose.x = wrap_coord(next.pose.x, size);
            next.pose.y = wrap_coord(next.pose.y, size);
            self.state = next;
            if self.in_collision() {
                collided = true;
                break;
            }
        }
        self.steps += 1;
        let observation = self.observe()?;
        let reward = reward_fn(&observation, action, collided, &self.config.rewards);
        let limit = self.steps >= self.config.step_limit;
        self.done = collided || limit;
        Ok(AgentStep {
            observation,
            reward,
            done: self.done,
            info: StepInfo { step: self.steps, collided, success: limit && !collided, pose: self.state.pose },
        })
    }
}

/// Concatenated bucket indices, one per sector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey(pub Vec<u8>);

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl core::str::FromStr for StateKey {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| c.to_digit(10).map(|d| d as u8).ok_or(AgentError::InvalidConfig("state key digit")))
            .collect::<Result<Vec<u8>, _>>()
            .map(StateKey)
    }
}

/// Bucket `i` holds `(e[i-1], e[i]]`, so a value exactly on an edge falls
/// into the lower bucket.
pub fn bucket(value: f64, edges: &[f64]) -> u8 {
    edges.iter().filter(|&&e| value > e).count() as u8
}

pub fn discretize_observation(observation: &[f64], edges: &[f64]) -> StateKey {
    StateKey(observation.iter().map(|&v| bucket(v, edges)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct QParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for QParams {
    fn default() -> Self {
        QParams { alpha: 0.1, gamma: 0.99 }
    }
}

impl QParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AgentError::InvalidConfig("alpha must be in (0, 1]"));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(AgentError::InvalidConfig("gamma must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Action values per state; unseen states read as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ<K: Ord, const A: usize> {
    pub values: BTreeMap<K, [f64; A]>,
    pub params: QParams,
}

impl<K: Ord + Clone, const A: usize> TabularQ<K, A> {
    pub fn new(params: QParams) -> Result<Self, AgentError> {
        params.validate()?;
        Ok(TabularQ { values: BTreeMap::new(), params })
    }

    pub fn get(&self, key: &K) -> [f64; A] {
        self.values.get(key).copied().unwrap_or([0.0; A])
    }

    /// Highest-valued action index; ties go to the lowest index.
    pub fn greedy(&self, key: &K) -> usize {
        let q = self.get(key);
        let mut best = 0;
        for a in 1..A {
            if q[a] > q[best] {
                best = a;
            }
        }
        best
    }

    /// One Q-learning backup. `next = None` marks a terminal transition.
    /// Returns the new value of `(key, action)`.
    pub fn update(&mut self, key: &K, action: usize, reward: f64, next: Option<&K>) -> f64 {
        let bootstrap = next.map_or(0.0, |n| self.get(n).into_iter().fold(f64::NEG_INFINITY, f64::max));
        let QParams { alpha, gamma } = self.params;
        let entry = self.values.entry(key.clone()).or_insert([0.0; A]);
        entry[action] += alpha * (reward + gamma * bootstrap - entry[action]);
        entry[action]
    }
}

pub type QTable = TabularQ<StateKey, 3>;

pub fn q_update(table: &mut QTable, key: &StateKey, action: DiscreteAction, reward: f64, next: Option<&StateKey>) -> f64 {
    table.update(key, action.index(), reward, next)
}

impl QTable {
    pub fn greedy_action(&self, key: &StateKey) -> DiscreteAction {
        DiscreteAction::ALL[self.greedy(key)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub episodes: usize,
    pub q: QParams,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 2000,
            q: QParams::default(),
            epsilon_start: 0.5,
            epsilon_decay: 0.998,
            epsilon_min: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn epsilon(&self, episode: usize) -> f64 {
        (self.epsilon_start * libm::pow(self.epsilon_decay, episode as f64)).max(self.epsilon_min)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        self.q.validate()?;
        if self.episodes == 0 {
            return Err(AgentError::InvalidConfig("episodes must be >= 1"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.epsilon_start) && unit(self.epsilon_decay) && unit(self.epsilon_min)) {
            return Err(AgentError::InvalidConfig("epsilon schedule"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    #[cfg_attr(feature = "serde", serde(rename = "return"))]
    pub ret: f64,
    pub epsilon: f64,
}

pub fn trailing_mean_steps(curve: &[EpisodeRecord], window: usize) -> f64 {
    let tail = &curve[curve.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|r| r.steps as f64).sum::<f64>() / tail.len() as f64
}

// Independent RNG streams derived from one seed.
const EXPLORE_STREAM: u64 = 1;
const WORLD_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Epsilon-greedy Q-learning over fresh random worlds, one per episode.
pub fn train(env_config: &EnvConfig, cfg: &TrainConfig) -> Result<(QTable, Vec<EpisodeRecord>), AgentError> {
    cfg.validate()?;
    let mut env = ObstacleEnv::new(env_config.clone())?;
    let mut table = QTable::new(cfg.q)?;
    let mut explore = stream(cfg.seed, EXPLORE_STREAM);
    let mut worlds = stream(cfg.seed, WORLD_STREAM);
    let edges = env.config.bin_edges.clone();
    let mut curve = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon(episode);
        let mut key = discretize_observation(&env.reset(worlds.random())?, &edges);
        let mut ret = 0.0;
        loop {
            let action = if explore.random_bool(epsilon) {
                DiscreteAction::ALL[explore.random_range(0..3)]
            } else {
                table.greedy_action(&key)
            };
            let step = env.step(action)?;
            ret += step.reward;
            let next = discretize_observation(&step.observation, &edges);
            // Reaching the step limit is a time-out, not a terminal state.
            let terminal = step.info.collided;
            q_update(&mut table, &key, action, step.reward, (!terminal).then_some(&next));
            key = next;
            if step.done {
                break;
            }
        }
        curve.push(EpisodeRecord { episode, steps: env.steps(), ret, epsilon });
    }
    Ok((table, curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_survival: f64,
    pub collision_rate: f64,
    /// `|#left - #right| / (#left + #right)`, 0 when no turns were taken.
    pub turn_bias: f64,
    pub straight: u64,
    pub left: u64,
    pub right: u64,
}

/// Outcome of one greedy rollout.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub steps: usize,
    pub collided: bool,
    pub straight: u64,
    pub left: u64,
    pub right: u64,
}

/// World seeds for `n_episodes` evaluation rollouts.
pub fn episode_seeds(seed: u64, n_episodes: usize) -> Vec<u64> {
    let mut worlds = stream(seed, WORLD_STREAM);
    (0..n_episodes).map(|_| worlds.random()).collect()
}

/// One greedy rollout on the world generated from `world_seed`.
pub fn greedy_episode(table: &QTable, env: &mut ObstacleEnv, world_seed: u64) -> Result<EpisodeStats, AgentError> {
    let edges = env.config.bin_edges.clone();
    let mut stats = EpisodeStats::default();
    let mut key = discretize_observation(&env.reset(world_seed)?, &edges);
    loop {
        let action = table.greedy_action(&key);
        match action {
            DiscreteAction::GoStraight => stats.straight += 1,
            DiscreteAction::TurnLeft => stats.left += 1,
            DiscreteAction::TurnRight => stats.right += 1,
        }
        let step = env.step(action)?;
        key = discretize_observation(&step.observation, &edges);
        if step.done {
            stats.collided = step.info.collided;
            stats.steps = env.steps();
            return Ok(stats);
        }
    }
}

pub fn summarize(episodes: &[EpisodeStats]) -> EvalMetrics {
    let n = episodes.len();
    let mut m = EvalMetrics { episodes: n, ..Default::default() };
    if n == 0 {
        return m;
    }
    for e in episodes {
        m.straight += e.straight;
        m.left += e.left;
        m.right += e.right;
    }
    m.mean_survival = episodes.iter().map(|e| e.steps).sum::<usize>() as f64 / n as f64;
    m.collision_rate = episodes.iter().filter(|e| e.collided).count() as f64 / n as f64;
    let turns = m.left + m.right;
    m.turn_bias = if turns == 0 { 0.0 } else { m.left.abs_diff(m.right) as f64 / turns as f64 };
    m
}

/// Greedy rollouts on `n_episodes` worlds drawn from `seed`.
pub fn evaluate_policy(
    table: &QTable,
    env_config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalMetrics, AgentError> {
    if n_episodes == 0 {
        return Err(AgentError::InvalidConfig("n_episodes must be >= 1"));
    }
    let mut env = ObstacleEnv::new(env_config.clone())?;
    let episodes = episode_seeds(seed, n_episodes)
        .into_iter()
        .map(|s| greedy_episode(table, &mut env, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&episodes))
}

/// Text form of a key for serialized tables.
pub fn key_string(key: &StateKey) -> String {
    alloc::format!("{key}")
}
