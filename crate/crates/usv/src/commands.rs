//! One function per subcommand. Each writes its artifacts under the output
//! directory and returns a short JSON summary for stdout.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use usv_core::agent::{
    episode_seeds, greedy_episode, summarize, train, trailing_mean_steps, ObstacleEnv,
};
use usv_core::avoidance::{run_avoidance, AvoidError};
use usv_core::behaviors::{run_circling, run_docking, CirclingTask};
use usv_core::guidance::{run_mission, station_keep, MissionParams, WaypointPath};
use usv_core::perception::{
    describe, predict_item, synthetic_sample_at, train_centroid_model, training_images_for, ClassLabel,
    ConfusionMatrix,
};
use usv_core::planning::{inflate_hull, plan_min_angle, ObstacleTrack};
use usv_core::sim::ObjectKind;
use usv_core::{PointCloud, Vec2};

use crate::config::{AgentConfig, Behavior, Mission, PerceptionConfig, PlanConfig};
use crate::error::CliError;
use crate::formats;
use crate::plot::trajectory_svg;

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn out_dir(common: &Common, from_config: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    let dir = common
        .out
        .clone()
        .or_else(|| from_config.cloned())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set \"output\"".into()))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn vec2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, Value::from)
}

pub fn run(common: &Common) -> Result<Value, CliError> {
    let mission = Mission::load(&common.config, common.seed)?;
    let out = out_dir(common, mission.output.as_ref())?;
    let sim = mission.sim_config()?;
    let world = &mission.world;
    let start = mission.world_file.start;
    let timeout = mission.config.timeout;
    let behavior = &mission.config.behavior;

    let mut markers = Vec::new();
    let mut paths = Vec::new();
    let (log, success, details) = match behavior {
        Behavior::Waypoints { waypoints, lookahead, arrival_radius, cruise_speed } => {
            let wps: Vec<Vec2> = waypoints.iter().copied().map(vec2).collect();
            markers.clone_from(&wps);
            let path = WaypointPath::new(wps, *arrival_radius, *lookahead).map_err(invalid)?;
            let params = MissionParams { cruise_speed: *cruise_speed, timeout };
            let r = run_mission(world, start, &path, &params, &sim).map_err(invalid)?;
            let details = json!({
                "outcome": r.outcome,
                "waypoints_hit": r.waypoints_hit(),
                "waypoint_hit_times": r.hit_times.iter().copied().map(opt).collect::<Vec<_>>(),
                "collisions": r.collisions,
            });
            let ok = r.success();
            (r.log, ok, details)
        }
        Behavior::StationKeep { hold_point, duration, tolerance } => {
            markers.push(vec2(*hold_point));
            let r = station_keep(world, start, vec2(*hold_point), *duration, &sim).map_err(invalid)?;
            let details = json!({
                "hold_error_final_half_max": r.final_half_max(),
                "hold_error_mean": r.mean_error(),
                "hold_error_max": r.max_error(),
                "tolerance": tolerance,
            });
            let ok = r.final_half_max() <= *tolerance;
            (r.log, ok, details)
        }
        Behavior::CircleTotem { totem_id, radius, laps, direction, gains, band } => {
            let totem = world
                .object(*totem_id)
                .ok_or_else(|| CliError::Config(format!("no object with id {totem_id}")))?
                .shape
                .center();
            markers.push(totem);
            let task = CirclingTask { totem, radius: *radius, direction: *direction, laps: *laps, timeout };
            let r = run_circling(world, start, &task, gains, &sim).map_err(invalid)?;
            let converged = r.converged_at_lap(band * radius);
            let details = json!({
                "laps": r.laps_completed(),
                "laps_requested": laps,
                "converged_at_lap": opt(converged),
                "final_lap_mean_phi": r.final_lap_mean_phi(),
            });
            let ok = converged.is_some() && r.laps_completed() >= *laps;
            (r.log, ok, details)
        }
        Behavior::Dock { mouth, params, thrusts, tolerance } => {
            markers.push(mouth.position());
            let r = run_docking(world, start, *mouth, params, thrusts, timeout, &sim).map_err(invalid)?;
            let details = json!({
                "mouth_lateral_error": opt(r.mouth_lateral_error),
                "tolerance": tolerance,
            });
            (r.log, r.mouth_lateral_error.is_some_and(|e| e <= *tolerance), details)
        }
        Behavior::AvoidDemo { goal, params } => {
            markers.push(vec2(*goal));
            let mut params = *params;
            params.mission.timeout = timeout;
            let r = match run_avoidance(world, start, vec2(*goal), &params, &sim) {
                Ok(r) => r,
                Err(AvoidError::Plan(e)) => return Err(CliError::Planner(e.to_string())),
                Err(e) => return Err(invalid(e)),
            };
            paths = r.plans.iter().map(|p| p.vertices.clone()).collect();
            formats::write_plans(&out.join("plans.csv"), &paths)?;
            let details = json!({
                "reached": r.reached,
                "collisions": r.collisions,
                "plans": r.plans.len(),
                "alerts": r.alerts,
                "tracks": r.tracks.len(),
            });
            (r.log, r.reached && r.collisions == 0, details)
        }
    };

    formats::write_trajectory(&out.join("trajectory.csv"), &log)?;
    fs::write(out.join("trajectory.svg"), trajectory_svg(world, &log, &markers, &paths))?;
    let mut metrics = json!({
        "command": "run",
        "behavior": behavior.name(),
        "seed": mission.config.seed,
        "success": success,
        "duration": log.duration(),
        "ticks": log.len(),
    });
    metrics.as_object_mut().unwrap().extend(details.as_object().unwrap().clone());
    formats::write_metrics(&out.join("metrics.json"), metrics.clone())?;
    if !success {
        return Err(CliError::Mission(format!("{} did not succeed", behavior.name())));
    }
    Ok(metrics)
}

pub fn train_cmd(common: &Common) -> Result<Value, CliError> {
    let cfg = AgentConfig::load(&common.config, common.seed)?;
    let out = out_dir(common, cfg.output.as_ref())?;
    let (table, curve) = train(&cfg.env, &cfg.train).map_err(invalid)?;
    formats::write_qtable(&out.join("qtable.json"), &table)?;
    formats::write_learning_curve(&out.join("learning_curve.csv"), &curve)?;
    let metrics = json!({
        "command": "train",
        "seed": cfg.seed,
        "episodes": curve.len(),
        "trailing_mean_steps_100": trailing_mean_steps(&curve, 100),
        "final_epsilon": curve.last().map_or(0.0, |r| r.epsilon),
        "states_visited": table.values.len(),
    });
    formats::write_metrics(&out.join("train_metrics.json"), metrics.clone())?;
    Ok(metrics)
}

pub fn eval_cmd(common: &Common, table_flag: Option<&Path>) -> Result<Value, CliError> {
    let cfg = AgentConfig::load(&common.config, common.seed)?;
    let out = out_dir(common, cfg.output.as_ref())?;
    let table_path = table_flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.table.clone())
        .ok_or_else(|| CliError::Config("eval needs a Q-table: pass --table or set \"table\"".into()))?;
    if !table_path.is_file() {
        return Err(CliError::Config(format!("Q-table not found: {}", table_path.display())));
    }
    let table = formats::read_qtable(&table_path, cfg.env.sectors, cfg.env.bins())?;
    let seeds = episode_seeds(cfg.eval_seed(), cfg.eval_episodes);
    let episodes = seeds
        .par_iter()
        .map_init(
            || ObstacleEnv::new(cfg.env.clone()),
            |env, &s| match env {
                Ok(env) => greedy_episode(&table, env, s).map_err(invalid),
                Err(e) => Err(invalid(e)),
            },
        )
        .collect::<Result<Vec<_>, _>>()?;
    let m = summarize(&episodes);
    let metrics = json!({
        "command": "eval",
        "seed": cfg.eval_seed(),
        "episodes": m.episodes,
        "mean_survival": m.mean_survival,
        "collision_rate": m.collision_rate,
        "turn_bias": m.turn_bias,
        "actions": { "straight": m.straight, "left": m.left, "right": m.right },
    });
    formats::write_metrics(&out.join("eval_metrics.json"), metrics.clone())?;
    Ok(metrics)
}

fn sample_name(id: usize) -> String {
    format!("{id:04}")
}

pub fn dataset_cmd(common: &Common) -> Result<Value, CliError> {
    let cfg = PerceptionConfig::load(&common.config, common.seed)?;
    let out = out_dir(common, cfg.output.as_ref())?;
    let jobs: Vec<(ObjectKind, usize)> =
        ObjectKind::ALL.iter().flat_map(|&k| (0..cfg.per_class).map(move |i| (k, i))).collect();
    let points = jobs
        .par_iter()
        .map(|&(kind, id)| -> Result<usize, CliError> {
            let cloud = synthetic_sample_at(cfg.seed, kind, id, &cfg.scene, &cfg.pipeline).map_err(invalid)?;
            formats::write_xyz(&out.join(kind.name()).join(format!("{}.xyz", sample_name(id))), &cloud)?;
            if cfg.images {
                let img = describe(&cloud, &cfg.pipeline).map_err(invalid)?;
                let base = out.join("images").join(kind.name()).join(sample_name(id));
                formats::write_png(&base.with_extension("png"), &img)?;
                formats::write_json(&base.with_extension("json"), &formats::image_sidecar(&img, kind))?;
            }
            Ok(cloud.len())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = json!({
        "command": "dataset",
        "seed": cfg.seed,
        "per_class": cfg.per_class,
        "classes": ObjectKind::ALL.map(|k| k.name()),
        "samples": points.len(),
        "mean_points": points.iter().sum::<usize>() as f64 / points.len() as f64,
        "images": cfg.images,
    });
    formats::write_metrics(&out.join("dataset.json"), metrics.clone())?;
    Ok(metrics)
}

/// Labeled clouds split into training and held-out sets.
type Split = (Vec<(ClassLabel, PointCloud)>, Vec<(ClassLabel, PointCloud)>);

fn generate_split(cfg: &PerceptionConfig) -> Result<Split, CliError> {
    let n = cfg.train_per_class + cfg.per_class;
    let jobs: Vec<(ObjectKind, usize)> =
        ObjectKind::ALL.iter().flat_map(|&k| (0..n).map(move |i| (k, i))).collect();
    let clouds = jobs
        .par_iter()
        .map(|&(k, i)| synthetic_sample_at(cfg.seed, k, i, &cfg.scene, &cfg.pipeline).map(|c| (k, i, c)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    let (train, test): (Vec<_>, Vec<_>) = clouds.into_iter().partition(|(_, i, _)| *i < cfg.train_per_class);
    let strip = |v: Vec<(ObjectKind, usize, PointCloud)>| v.into_iter().map(|(k, _, c)| (k, c)).collect();
    Ok((strip(train), strip(test)))
}

/// Reads `<dir>/<class>/*.xyz`; within each class the first
/// `train_per_class` files in name order train, the rest are held out.
fn read_split(dir: &Path, cfg: &PerceptionConfig) -> Result<Split, CliError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for kind in ObjectKind::ALL {
        let class_dir = dir.join(kind.name());
        let mut files: Vec<PathBuf> = fs::read_dir(&class_dir)
            .map_err(|e| CliError::Config(format!("{}: {e}", class_dir.display())))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|x| x == "xyz"))
            .collect();
        files.sort();
        if files.len() <= cfg.train_per_class {
            return Err(CliError::Config(format!(
                "{}: {} samples, need more than train_per_class = {}",
                class_dir.display(),
                files.len(),
                cfg.train_per_class
            )));
        }
        for (i, f) in files.iter().enumerate() {
            let item = (kind, formats::read_xyz(f)?);
            if i < cfg.train_per_class {
                train.push(item);
            } else {
                test.push(item);
            }
        }
    }
    Ok((train, test))
}

/// Thinning of held-out clouds draws from its own seed.
const TEST_SEED_OFFSET: u64 = 0x7e57;

fn confusion(
    model: &usv_core::perception::CentroidModel,
    test: &[(ClassLabel, PointCloud)],
    cfg: &PerceptionConfig,
    max_points: Option<usize>,
) -> Result<ConfusionMatrix, CliError> {
    let seed = cfg.seed.wrapping_add(TEST_SEED_OFFSET);
    let preds = test
        .par_iter()
        .enumerate()
        .map(|(i, (_, c))| predict_item(model, c, i, &cfg.pipeline, max_points, seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    let mut cm = ConfusionMatrix::default();
    for ((truth, _), p) in test.iter().zip(preds) {
        cm.record(*truth, p);
    }
    Ok(cm)
}

pub fn classify_cmd(common: &Common) -> Result<Value, CliError> {
    let cfg = PerceptionConfig::load(&common.config, common.seed)?;
    let out = out_dir(common, cfg.output.as_ref())?;
    let (train_set, test) = match &cfg.dataset {
        Some(dir) => read_split(dir, &cfg)?,
        None => generate_split(&cfg)?,
    };
    let images: Vec<_> = train_set
        .par_iter()
        .enumerate()
        .map(|(i, (k, c))| training_images_for(*k, c, i, &cfg.pipeline, cfg.augment, cfg.seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?
        .into_iter()
        .flatten()
        .collect();
    let model = train_centroid_model(&images).map_err(invalid)?;
    let dense = confusion(&model, &test, &cfg, None)?;
    let sparse = confusion(&model, &test, &cfg, Some(cfg.sparse_max_points))?;
    formats::write_confusion(&out.join("confusion.csv"), &dense)?;
    formats::write_confusion(&out.join("confusion_sparse.csv"), &sparse)?;
    let per_class = |cm: &ConfusionMatrix| -> Vec<usize> { cm.counts.iter().map(|r| r.iter().sum()).collect() };
    let metrics = json!({
        "command": "classify",
        "seed": cfg.seed,
        "classes": ObjectKind::ALL.map(|k| k.name()),
        "training_images": model.trained_on,
        "test_per_class": per_class(&dense),
        "accuracy": dense.accuracy(),
        "sparse_max_points": cfg.sparse_max_points,
        "accuracy_sparse": sparse.accuracy(),
    });
    formats::write_metrics(&out.join("metrics.json"), metrics.clone())?;
    Ok(metrics)
}

/// Sides of the polygon standing in for a circular footprint.
const CIRCLE_SIDES: usize = 16;

pub fn plan_cmd(common: &Common) -> Result<Value, CliError> {
    let (cfg, world) = PlanConfig::load(&common.config)?;
    let out = out_dir(common, cfg.output.as_ref())?;
    let tracks: Vec<ObstacleTrack> = world
        .objects
        .iter()
        .map(|o| ObstacleTrack {
            id: o.id,
            footprint: inflate_hull(&o.shape.polygon(CIRCLE_SIDES), cfg.margin),
            last_seen_tick: 0,
            alert_active: true,
        })
        .collect();
    let path = plan_min_angle(vec2(cfg.start), vec2(cfg.goal), &tracks, &cfg.planner)
        .map_err(|e| CliError::Planner(e.to_string()))?;
    formats::write_path(&out.join("path.csv"), &path.vertices)?;
    let metrics = json!({
        "command": "plan",
        "vertices": path.vertices.len(),
        "length": path.length(),
        "obstacles": tracks.len(),
    });
    formats::write_metrics(&out.join("metrics.json"), metrics.clone())?;
    Ok(metrics)
}
