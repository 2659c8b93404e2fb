//! JSON configuration files. Paths inside a config are resolved relative to
//! the directory holding that config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use usv_core::action::ActionThrusts;
use usv_core::agent::{EnvConfig, TrainConfig};
use usv_core::avoidance::AvoidParams;
use usv_core::behaviors::{CircleDirection, CirclingGains, DockParams};
use usv_core::control::ControllerGains;
use usv_core::estimation::FusionGains;
use usv_core::mission::SimConfig;
use usv_core::perception::{PipelineParams, SceneParams, SparseAugment};
use usv_core::planning::PlannerParams;
use usv_core::sim::{stock_shape, DynamicsParams, ObjectKind, SensorNoise, Shape, World, WorldObject};
use usv_core::{Pose2D, Vec2};

use crate::error::CliError;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Resolves `p` against `base` unless it is already absolute.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Box,
}

/// One object of a world file. Without `size` the kind's stock footprint is
/// used; `size` is `[x extent, y extent, height]` in metres, a circle taking
/// the x extent as its diameter.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: Option<u32>,
    pub kind: ObjectKind,
    pub shape: Option<ShapeKind>,
    pub pose: Pose2D,
    pub size: Option<[f64; 3]>,
}

impl ObjectSpec {
    pub fn to_object(&self, default_id: u32) -> Result<WorldObject, CliError> {
        let center = Vec2::new(self.pose.x, self.pose.y);
        let (stock, stock_height) = stock_shape(self.kind, center, self.pose.yaw);
        let stock_kind = match stock {
            Shape::Circle { .. } => ShapeKind::Circle,
            Shape::Box { .. } => ShapeKind::Box,
        };
        let (shape, height) = match (self.shape, self.size) {
            (None, None) => (stock, stock_height),
            (Some(k), None) if k == stock_kind => (stock, stock_height),
            (Some(_), None) => return Err(CliError::Config(format!("object {default_id}: shape given without size"))),
            (kind, Some([sx, sy, h])) => {
                let shape = match kind.unwrap_or(stock_kind) {
                    ShapeKind::Circle => Shape::Circle { center, radius: 0.5 * sx },
                    ShapeKind::Box => Shape::Box { center, extents: Vec2::new(sx, sy), yaw: self.pose.yaw },
                };
                (shape, h)
            }
        };
        let obj = WorldObject { id: self.id.unwrap_or(default_id), kind: self.kind, shape, height };
        obj.validate().map_err(|e| CliError::Config(format!("object {}: {e}", obj.id)))?;
        Ok(obj)
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub gps_sigma: f64,
    pub compass_sigma: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldFile {
    pub objects: Vec<ObjectSpec>,
    pub start: Pose2D,
    pub noise: NoiseSpec,
    pub dynamics: DynamicsParams,
}

impl WorldFile {
    pub fn load(path: &Path) -> Result<WorldFile, CliError> {
        read_json(path)
    }

    pub fn world(&self) -> Result<World, CliError> {
        let objects =
            self.objects.iter().enumerate().map(|(i, o)| o.to_object(i as u32)).collect::<Result<Vec<_>, _>>()?;
        let mut ids: Vec<u32> = objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("duplicate object id".into()));
        }
        World::new(objects).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn default_lookahead() -> f64 {
    5.0
}
fn default_arrival() -> f64 {
    1.5
}
fn default_cruise() -> f64 {
    1.5
}
fn default_hold_tolerance() -> f64 {
    1.0
}
fn default_band() -> f64 {
    0.2
}
fn default_timeout() -> f64 {
    300.0
}

/// What the vessel does during `run`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case")]
pub enum Behavior {
    Waypoints {
        waypoints: Vec<[f64; 2]>,
        #[serde(default = "default_lookahead")]
        lookahead: f64,
        #[serde(default = "default_arrival")]
        arrival_radius: f64,
        #[serde(default = "default_cruise")]
        cruise_speed: f64,
    },
    StationKeep {
        hold_point: [f64; 2],
        duration: f64,
        /// Largest error allowed over the second half of the run, m.
        #[serde(default = "default_hold_tolerance")]
        tolerance: f64,
    },
    CircleTotem {
        totem_id: u32,
        #[serde(rename = "R")]
        radius: f64,
        laps: f64,
        #[serde(default)]
        direction: CircleDirection,
        #[serde(default)]
        gains: CirclingGains,
        /// Convergence band as a fraction of `R`.
        #[serde(default = "default_band")]
        band: f64,
    },
    Dock {
        /// Bay mouth, yaw pointing into the bay.
        mouth: Pose2D,
        #[serde(default)]
        params: DockParams,
        #[serde(default)]
        thrusts: ActionThrusts,
        /// Largest lateral error at the mouth counted as a success, m.
        #[serde(default = "default_hold_tolerance")]
        tolerance: f64,
    },
    AvoidDemo {
        goal: [f64; 2],
        #[serde(default)]
        params: AvoidParams,
    },
}

impl Behavior {
    pub fn name(&self) -> &'static str {
        match self {
            Behavior::Waypoints { .. } => "waypoints",
            Behavior::StationKeep { .. } => "station_keep",
            Behavior::CircleTotem { .. } => "circle_totem",
            Behavior::Dock { .. } => "dock",
            Behavior::AvoidDemo { .. } => "avoid_demo",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct MissionConfig {
    pub world: PathBuf,
    pub seed: u64,
    #[serde(flatten)]
    pub behavior: Behavior,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub fusion: FusionGains,
    /// Overrides the world file's noise block.
    pub noise: Option<NoiseSpec>,
    /// Simulated seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    pub output: Option<PathBuf>,
}

/// A mission config with its world loaded and paths resolved.
#[derive(Debug, Clone)]
pub struct Mission {
    pub config: MissionConfig,
    pub world_file: WorldFile,
    pub world: World,
    pub output: Option<PathBuf>,
}

impl Mission {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Mission, CliError> {
        let mut config: MissionConfig = read_json(path)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        let dir = config_dir(path);
        let world_path = resolve(&dir, &config.world);
        if !world_path.is_file() {
            return Err(CliError::Config(format!("world file not found: {}", world_path.display())));
        }
        let world_file = WorldFile::load(&world_path)?;
        let world = world_file.world()?;
        if !(config.timeout.is_finite() && config.timeout >= 0.0) {
            return Err(CliError::Config("timeout must be >= 0".into()));
        }
        let output = config.output.as_ref().map(|o| resolve(&dir, o));
        Ok(Mission { config, world_file, world, output })
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let noise = self.config.noise.unwrap_or(self.world_file.noise);
        let sim = SimConfig {
            dynamics: self.world_file.dynamics,
            noise: SensorNoise { gps_sigma: noise.gps_sigma, compass_sigma: noise.compass_sigma, seed: self.config.seed },
            fusion: self.config.fusion,
            gains: self.config.gains,
        };
        sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(sim)
    }
}

fn default_eval_episodes() -> usize {
    100
}

/// Shared by `train` and `eval`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub seed: u64,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Seed for the evaluation worlds; defaults to `seed + 1` so evaluation
    /// never replays the training worlds.
    pub eval_seed: Option<u64>,
    /// Q-table to evaluate.
    pub table: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl AgentConfig {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<AgentConfig, CliError> {
        let mut c: AgentConfig = read_json(path)?;
        if let Some(s) = seed {
            c.seed = s;
        }
        c.train.seed = c.seed;
        let dir = config_dir(path);
        c.table = c.table.map(|t| resolve(&dir, &t));
        c.output = c.output.map(|o| resolve(&dir, &o));
        c.env.validate().map_err(|e| CliError::Config(e.to_string()))?;
        c.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if c.eval_episodes == 0 {
            return Err(CliError::Config("eval_episodes must be >= 1".into()));
        }
        Ok(c)
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval_seed.unwrap_or(self.seed.wrapping_add(1))
    }
}

fn default_per_class() -> usize {
    200
}
fn default_train_per_class() -> usize {
    100
}
fn default_sparse() -> usize {
    15
}
fn default_augment() -> Option<SparseAugment> {
    Some(SparseAugment::default())
}
fn default_true() -> bool {
    true
}

/// Shared by `dataset` and `classify`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionConfig {
    pub seed: u64,
    /// Samples per class written by `dataset`, and held-out test samples per
    /// class used by `classify`.
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    /// Training samples per class used by `classify`.
    #[serde(default = "default_train_per_class")]
    pub train_per_class: usize,
    /// Point budget of the sparse-cloud evaluation.
    #[serde(default = "default_sparse")]
    pub sparse_max_points: usize,
    #[serde(default)]
    pub scene: SceneParams,
    #[serde(default)]
    pub pipeline: PipelineParams,
    #[serde(default = "default_augment")]
    pub augment: Option<SparseAugment>,
    /// Whether `dataset` also writes flattened images.
    #[serde(default = "default_true")]
    pub images: bool,
    /// Dataset directory `classify` reads instead of generating clouds.
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl PerceptionConfig {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<PerceptionConfig, CliError> {
        let mut c: PerceptionConfig = read_json(path)?;
        if let Some(s) = seed {
            c.seed = s;
        }
        let dir = config_dir(path);
        c.dataset = c.dataset.map(|d| resolve(&dir, &d));
        c.output = c.output.map(|o| resolve(&dir, &o));
        c.scene.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if c.per_class == 0 || c.train_per_class == 0 || c.sparse_max_points == 0 {
            return Err(CliError::Config("sample counts must be >= 1".into()));
        }
        Ok(c)
    }
}

/// Input of `plan`: a world, a start and a goal.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub world: PathBuf,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    #[serde(default)]
    pub planner: PlannerParams,
    /// Extra margin around each object footprint, m.
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub output: Option<PathBuf>,
}

fn default_margin() -> f64 {
    1.0
}

impl PlanConfig {
    pub fn load(path: &Path) -> Result<(PlanConfig, World), CliError> {
        let mut c: PlanConfig = read_json(path)?;
        let dir = config_dir(path);
        let world_path = resolve(&dir, &c.world);
        let world = WorldFile::load(&world_path)?.world()?;
        c.output = c.output.map(|o| resolve(&dir, &o));
        if !(c.margin.is_finite() && c.margin >= 0.0) {
            return Err(CliError::Config("margin must be >= 0".into()));
        }
        Ok((c, world))
    }
}
