//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usv_core::agent::{evaluate_policy, train, trailing_mean_steps, EnvConfig, QParams, TabularQ, TrainConfig};
use usv_core::behaviors::{run_circling, CircleDirection, CirclingGains, CirclingTask};
use usv_core::geometry::{circle_polygon, Pose2D};
use usv_core::guidance::{run_mission, MissionParams, WaypointPath};
use usv_core::mission::{SimConfig, Simulation};
use usv_core::perception::{
    describe, extract_objects, predict_item, single_object_world, synthetic_sample_at, train_centroid_model,
    training_images_for, ConfusionMatrix, FlatImage, PipelineParams, SceneParams, SparseAugment,
};
use usv_core::planning::{plan_min_angle, ObstacleTrack, PlannerParams};
use usv_core::sim::{sample_lidar_cloud, Gps, LidarParams, ObjectKind, SensorNoise, ThrustCommand, VesselState, World};
use usv_core::Vec2;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// 1. Square navigation.

const EDGE: f64 = 15.0;
const ARRIVAL: f64 = 1.5;
const LOOKAHEAD: f64 = 5.0;

fn square_navigation() -> Verdict {
    let corners = [Vec2::new(EDGE, 0.0), Vec2::new(EDGE, EDGE), Vec2::new(0.0, EDGE), Vec2::new(0.0, 0.0)];
    let path = WaypointPath::new(corners.to_vec(), ARRIVAL, LOOKAHEAD).unwrap();
    let params = MissionParams::default();
    let r = run_mission(&World::empty(), Pose2D::default(), &path, &params, &SimConfig::default()).unwrap();

    // Closest approach to each corner, taken in visiting order.
    let mut closest = Vec::new();
    let mut from = 0;
    for c in corners {
        let (i, d) = r.log.rows[from..]
            .iter()
            .enumerate()
            .map(|(i, row)| (i, Vec2::new(row.x, row.y).distance(c)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        closest.push(d);
        from += i;
    }
    let worst = closest.iter().copied().fold(0.0, f64::max);

    // Pure pursuit at cruise speed toward a target 45° off the bow, the
    // steady turn through a right-angle corner.
    let cruise_turn = params.cruise_speed * 2.0 * FRAC_PI_4.sin() / LOOKAHEAD;
    let peak = r.log.rows.iter().map(|row| row.yaw_rate.abs()).fold(0.0, f64::max);
    verdict(
        r.success() && worst <= ARRIVAL && peak <= 2.0 * cruise_turn,
        format!(
            "outcome {:?}, worst corner miss {worst:.2} m <= {ARRIVAL}, peak yaw rate {peak:.3} <= {:.3} rad/s",
            r.outcome,
            2.0 * cruise_turn
        ),
    )
}

// 2. Totem circling.

fn totem_circling() -> Verdict {
    const R: f64 = 5.0;
    let mut pass = true;
    let mut parts = Vec::new();
    for direction in [CircleDirection::Counterclockwise, CircleDirection::Clockwise] {
        let totem = Vec2::new(0.0, 0.0);
        let start = Pose2D::new(2.0 * R, 0.0, direction.sign() * FRAC_PI_2);
        let task = CirclingTask { totem, radius: R, direction, laps: 32.5, timeout: 2000.0 };
        let r = run_circling(&World::empty(), start, &task, &CirclingGains::default(), &SimConfig::default()).unwrap();
        let converged = r.converged_at_lap(0.2 * R);
        let held = converged.map_or(0.0, |c| r.laps_completed() - c);
        pass &= converged.is_some_and(|c| c <= 2.0) && held >= 30.0;
        parts.push(format!("{direction:?}: in band after lap {:.2}, then {held:.1} laps", converged.unwrap_or(f64::NAN)));
    }
    verdict(pass, parts.join("; "))
}

// 3. Minimum-angle planner against a brute-force collision oracle.

/// Dense sampling of the segment against the polygon's edge half-planes.
fn oracle_collides(a: Vec2, b: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let inside = |p: Vec2| {
        (0..n).all(|i| {
            let (e0, e1) = (poly[i], poly[(i + 1) % n]);
            (e1.x - e0.x) * (p.y - e0.y) - (e1.y - e0.y) * (p.x - e0.x) >= -1e-12
        })
    };
    let steps = ((a.distance(b) / 0.005).ceil() as usize).max(1);
    (0..=steps).any(|k| {
        let t = k as f64 / steps as f64;
        inside(a + (b - a) * t)
    })
}

/// Obstacles keep the endpoints clear and leave passable gaps.
fn random_world(rng: &mut ChaCha8Rng, n: usize, clearance: f64) -> (Vec2, Vec2, Vec<ObstacleTrack>) {
    let start = Vec2::new(0.0, 0.0);
    let goal = Vec2::new(40.0, rng.random_range(-10.0..10.0));
    let mut discs: Vec<(Vec2, f64)> = Vec::new();
    let mut guard = 0;
    while discs.len() < n && guard < 10_000 {
        guard += 1;
        let c = Vec2::new(rng.random_range(4.0..36.0), rng.random_range(-12.0..12.0));
        let r = rng.random_range(0.5..3.0);
        let clear_ends = c.distance(start) >= r + clearance + 1.0 && c.distance(goal) >= r + clearance + 1.0;
        if clear_ends && discs.iter().all(|(o, ro)| c.distance(*o) >= r + ro + 2.0 * clearance + 0.5) {
            discs.push((c, r));
        }
    }
    let tracks = discs
        .iter()
        .enumerate()
        .map(|(i, &(c, r))| ObstacleTrack {
            id: i as u32,
            footprint: circle_polygon(c, r, 12),
            last_seen_tick: 0,
            alert_active: true,
        })
        .collect();
    (start, goal, tracks)
}

fn planner_oracle() -> Verdict {
    let params = PlannerParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ok, mut empty_worlds, mut empty_ok) = (0, 0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(0..=10);
        let (start, goal, tracks) = random_world(&mut rng, n, params.clearance);
        let Ok(path) = plan_min_angle(start, goal, &tracks, &params) else {
            continue;
        };
        let ends = path.vertices.first() == Some(&start) && path.vertices.last() == Some(&goal);
        let clear =
            path.vertices.windows(2).all(|w| tracks.iter().all(|t| !oracle_collides(w[0], w[1], &t.footprint)));
        ok += usize::from(ends && clear);
        if tracks.is_empty() {
            empty_worlds += 1;
            empty_ok += usize::from(path.vertices == [start, goal]);
        }
    }
    for _ in 0..100 {
        let s = Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let g = Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        empty_worlds += 1;
        empty_ok += usize::from(plan_min_angle(s, g, &[], &params).is_ok_and(|p| p.vertices == [s, g]));
    }
    verdict(
        ok == 1000 && empty_ok == empty_worlds,
        format!("{ok}/1000 worlds pass the oracle, {empty_ok}/{empty_worlds} empty worlds give [start, goal]"),
    )
}

// 4. Reinforcement-learning obstacle avoidance.

fn rl_avoidance() -> Verdict {
    let env = EnvConfig::default();
    let tc = TrainConfig::default();
    let (table, curve) = train(&env, &tc).unwrap();
    let survival = trailing_mean_steps(&curve, 100);
    // The training worlds come from seed `tc.seed`; evaluation draws fresh
    // ones from the next seed.
    let m = evaluate_policy(&table, &env, 100, tc.seed + 1).unwrap();
    verdict(
        curve.len() == 2000 && survival >= 100.0 && m.collision_rate <= 0.10,
        format!(
            "{} episodes, trailing-100 survival {survival:.1} >= 100, greedy collision rate {:.2} <= 0.10 over {} fresh worlds",
            curve.len(),
            m.collision_rate,
            m.episodes
        ),
    )
}

// 5. Q-learning against value iteration.

const MDP: [[(usize, f64); 2]; 3] = [[(1, 0.0), (0, 1.0)], [(2, 0.0), (0, 0.5)], [(2, 2.0), (0, 0.0)]];
const GAMMA: f64 = 0.9;

fn q_learning_mdp() -> Verdict {
    let mut oracle = [[0.0f64; 2]; 3];
    for _ in 0..2000 {
        let prev = oracle;
        for (s, row) in MDP.iter().enumerate() {
            for (a, &(s2, r)) in row.iter().enumerate() {
                oracle[s][a] = r + GAMMA * prev[s2][0].max(prev[s2][1]);
            }
        }
    }
    let mut table: TabularQ<usize, 2> = TabularQ::new(QParams { alpha: 0.5, gamma: GAMMA }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20_000 {
        let (s, a) = (rng.random_range(0..3), rng.random_range(0..2));
        let (s2, r) = MDP[s][a];
        table.update(&s, a, r, Some(&s2));
    }
    let err = (0..3)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| (table.get(&s)[a] - oracle[s][a]).abs())
        .fold(0.0, f64::max);
    verdict(err <= 1e-3, format!("max |Q - Q*| = {err:.2e} <= 1e-3 (Q*(2,0) = {:.4})", oracle[2][0]))
}

// 6. Flattened point-cloud classification.

fn classification() -> Verdict {
    const TRAIN: usize = 100;
    const TEST: usize = 200;
    const SPARSE: usize = 15;
    let seed = 6;
    let scene = SceneParams::default();
    let pipe = PipelineParams::default();
    let sample = |k, id| synthetic_sample_at(seed, k, id, &scene, &pipe).unwrap();

    let mut images = Vec::new();
    for (i, (k, id)) in ObjectKind::ALL.iter().flat_map(|&k| (0..TRAIN).map(move |id| (k, id))).enumerate() {
        images.extend(training_images_for(k, &sample(k, id), i, &pipe, Some(SparseAugment::default()), seed).unwrap());
    }
    let model = train_centroid_model(&images).unwrap();

    // Held-out ids never overlap the training ids.
    let (mut dense, mut sparse) = (ConfusionMatrix::default(), ConfusionMatrix::default());
    for (i, (k, id)) in ObjectKind::ALL.iter().flat_map(|&k| (TRAIN..TRAIN + TEST).map(move |id| (k, id))).enumerate() {
        let cloud = sample(k, id);
        dense.record(k, predict_item(&model, &cloud, i, &pipe, None, seed + 1).unwrap());
        sparse.record(k, predict_item(&model, &cloud, i, &pipe, Some(SPARSE), seed + 1).unwrap());
    }
    let per_class = dense.counts.iter().all(|row| row.iter().sum::<usize>() == TEST);
    verdict(
        per_class && dense.accuracy() >= 0.90 && sparse.accuracy() >= 0.70,
        format!(
            "{TEST} held-out per class: accuracy {:.3} >= 0.90, sparse (<= {SPARSE} points) {:.3} >= 0.70",
            dense.accuracy(),
            sparse.accuracy()
        ),
    )
}

// 7. Rotation-normalization invariance.

fn cardinal_images(kind: ObjectKind, range: f64, bearing: f64, yaw: f64, normalize: bool) -> Vec<FlatImage> {
    // Noise-free returns isolate the effect of the sensor heading.
    let lidar = LidarParams { range_sigma: 0.0, ..LidarParams::default() };
    let pipe = PipelineParams { normalize, ..PipelineParams::default() };
    let world = single_object_world(kind, range, bearing, yaw);
    (0..4)
        .map(|q| {
            let vessel = VesselState::at_rest(Pose2D::new(0.0, 0.0, q as f64 * FRAC_PI_2));
            let scan = sample_lidar_cloud(&world, &vessel, &lidar, &mut ChaCha8Rng::seed_from_u64(q)).unwrap();
            describe(&extract_objects(&scan, &pipe).unwrap()[0], &pipe).unwrap()
        })
        .collect()
}

fn max_pairwise(imgs: &[FlatImage]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..imgs.len() {
        for j in i + 1..imgs.len() {
            worst = worst.max(imgs[i].occupied_mad(&imgs[j]));
        }
    }
    worst
}

fn rotation_invariance() -> Verdict {
    let placements = [(7.0, 0.9, 0.6), (5.0, -2.0, 1.3), (10.0, 2.6, 0.2)];
    let (mut norm_worst, mut raw_best, mut raw_min) = (0.0f64, 0.0f64, f64::INFINITY);
    for kind in ObjectKind::ALL {
        for &(range, bearing, yaw) in &placements {
            let norm = max_pairwise(&cardinal_images(kind, range, bearing, yaw, true));
            let raw = max_pairwise(&cardinal_images(kind, range, bearing, yaw, false));
            norm_worst = norm_worst.max(norm);
            raw_best = raw_best.max(raw);
            raw_min = raw_min.min(raw);
        }
    }
    verdict(
        norm_worst <= 0.05 && raw_best > 0.15,
        format!(
            "{} objects: normalized worst pair {norm_worst:.4} <= 0.05, unnormalized largest pair {raw_best:.3} > 0.15 (smallest per-object max {raw_min:.3})",
            4 * placements.len()
        ),
    )
}

// 8. Localization fusion.

fn fusion_rmse(gps_sigma: f64, ticks: usize, seed: u64) -> (f64, f64, f64) {
    let config = SimConfig { noise: SensorNoise { gps_sigma, compass_sigma: 0.0, seed }, ..SimConfig::default() };
    let mut sim = Simulation::new(World::empty(), Pose2D::default(), config).unwrap();
    // Same seed as the simulated receiver, so these are the fused readings.
    let mut raw = Gps::new(gps_sigma, seed);
    let (mut fused_sq, mut raw_sq, mut worst) = (0.0, 0.0, 0.0f64);
    for k in 0..ticks {
        let turn = if (k / 600) % 2 == 0 { 0.3 } else { -0.3 };
        sim.step(ThrustCommand::new(0.5 - turn, 0.5 + turn)).unwrap();
        let truth = sim.state.pose.position();
        let err = sim.estimate.pose.position().distance(truth);
        fused_sq += err * err;
        raw_sq += (raw.read(&sim.state) - truth).norm_sq();
        worst = worst.max(err);
    }
    ((fused_sq / ticks as f64).sqrt(), (raw_sq / ticks as f64).sqrt(), worst)
}

fn localization_fusion() -> Verdict {
    let (fused, raw, _) = fusion_rmse(1.0, 5000, 8);
    let (_, _, clean_worst) = fusion_rmse(0.0, 5000, 8);
    verdict(
        fused < 0.7 * raw && clean_worst <= 1e-6,
        format!("fused RMSE {fused:.3} < 0.7 x raw {raw:.3}; zero-noise worst error {clean_worst:.1e} m <= 1e-6"),
    )
}

// 9. Determinism of every command.

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Verdict {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cfg = |name: &str| configs.join(name).to_str().unwrap().to_string();
    let tmp = tempfile::tempdir().unwrap();
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("run square", vec!["run".into(), "--config".into(), cfg("square.json")]),
        ("run station", vec!["run".into(), "--config".into(), cfg("station.json")]),
        ("run circle", vec!["run".into(), "--config".into(), cfg("circle.json")]),
        ("run dock", vec!["run".into(), "--config".into(), cfg("dock.json")]),
        ("run avoid", vec!["run".into(), "--config".into(), cfg("avoid.json")]),
        ("train", vec!["train".into(), "--config".into(), cfg("agent.json")]),
        ("eval", vec!["eval".into(), "--config".into(), cfg("agent.json"), "--table".into()]),
        ("dataset", vec!["dataset".into(), "--config".into(), cfg("perception.json")]),
        ("classify", vec!["classify".into(), "--config".into(), cfg("perception.json")]),
        ("plan", vec!["plan".into(), "--config".into(), cfg("plan.json")]),
    ];
    let mut same = 0;
    let mut files = 0;
    let mut bad = Vec::new();
    for (label, args) in &commands {
        let mut snaps = Vec::new();
        for rep in ["a", "b"] {
            let out = tmp.path().join(rep).join(label.replace(' ', "_"));
            let mut argv = args.clone();
            if *label == "eval" {
                argv.push(tmp.path().join(rep).join("train/qtable.json").to_str().unwrap().into());
            }
            argv.extend(["--out".into(), out.to_str().unwrap().into(), "--quiet".into()]);
            let status = Command::new(env!("CARGO_BIN_EXE_usv")).args(&argv).status().unwrap();
            snaps.push((status.code(), snapshot(&out)));
        }
        let ok = snaps[0] == snaps[1] && snaps[0].0 == Some(0) && !snaps[0].1.is_empty();
        files += snaps[0].1.len();
        if ok {
            same += 1;
        } else {
            bad.push(*label);
        }
    }
    verdict(
        bad.is_empty(),
        format!("{same}/{} commands byte-identical on rerun ({files} files){}", commands.len(), if bad.is_empty() {
            String::new()
        } else {
            format!(", differing: {bad:?}")
        }),
    )
}

type Criterion = (&'static str, Option<Duration>, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("square navigation", Some(Duration::from_secs(10)), square_navigation),
        ("totem circling", Some(Duration::from_secs(30)), totem_circling),
        ("minimum-angle planner", Some(Duration::from_secs(10)), planner_oracle),
        ("RL obstacle avoidance", Some(Duration::from_secs(300)), rl_avoidance),
        ("Q-learning vs value iteration", None, q_learning_mdp),
        ("flattened point-cloud classification", Some(Duration::from_secs(60)), classification),
        ("rotation-normalization invariance", None, rotation_invariance),
        ("localization fusion", None, localization_fusion),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let v = check();
        let elapsed = t0.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit.map_or(String::new(), |l| format!(" < {}s", l.as_secs()));
        println!(
            "{} {}. {name}: {}; {:.2}s{budget}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
