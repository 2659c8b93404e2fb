use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use usv::formats::read_confusion;

const OPEN_WATER: &str = r#"{ "objects": [], "start": { "x": 0.0, "y": 0.0, "yaw": 0.0 } }"#;

fn usv(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_usv")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

/// Writes `files` into a fresh directory.
fn setup(files: &[(&str, &str)]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in files {
        fs::write(dir.path().join(name), body).unwrap();
    }
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path to contents for every file under `root`.
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

fn square_mission(timeout: f64) -> String {
    format!(
        r#"{{ "world": "world.json", "seed": 3, "behavior": "waypoints",
             "waypoints": [[15, 0], [15, 15], [0, 15], [0, 0]], "timeout": {timeout},
             "noise": {{ "gps_sigma": 0.3, "compass_sigma": 0.02 }} }}"#
    )
}

const SMALL_AGENT: &str = r#"{ "seed": 4, "train": { "episodes": 30 }, "env": { "step_limit": 80 }, "eval_episodes": 12 }"#;
const SMALL_PERCEPTION: &str = r#"{ "seed": 2, "per_class": 6, "train_per_class": 4 }"#;

#[test]
fn run_writes_trajectory_metrics_and_plot() {
    let dir = setup(&[("world.json", OPEN_WATER), ("m.json", &square_mission(200.0))]);
    let out = dir.path().join("out");
    let (code, stdout, _) = usv(&["run", "--config", s(&dir.path().join("m.json")), "--out", s(&out)]);
    assert_eq!(code, 0);
    assert!(stdout.contains("\"success\":true"));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,yaw,est_x,est_y,est_yaw,surge,yaw_rate,thrust_l,thrust_r\n"));
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["schema_version"], 1);
    assert_eq!(metrics["waypoint_hit_times"].as_array().unwrap().len(), 4);
    assert!(fs::read_to_string(out.join("trajectory.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn quiet_suppresses_stdout() {
    let dir = setup(&[("world.json", OPEN_WATER), ("m.json", &square_mission(5.0))]);
    let (code, stdout, stderr) =
        usv(&["run", "--config", s(&dir.path().join("m.json")), "--out", s(&dir.path().join("o")), "--quiet"]);
    assert_eq!(code, 3);
    assert!(stdout.is_empty());
    let err: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(err["code"], 3);
}

#[test]
fn zero_timeout_is_a_mission_failure() {
    let dir = setup(&[("world.json", OPEN_WATER), ("m.json", &square_mission(0.0))]);
    let out = dir.path().join("out");
    let (code, _, _) = usv(&["run", "--config", s(&dir.path().join("m.json")), "--out", s(&out)]);
    assert_eq!(code, 3);
    // Failure metrics are still written.
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["success"], false);
}

#[test]
fn config_errors_exit_2() {
    let dir = setup(&[
        ("world.json", OPEN_WATER),
        ("no_seed.json", r#"{ "world": "world.json", "behavior": "waypoints", "waypoints": [[5, 0]] }"#),
        ("bad_behavior.json", r#"{ "world": "world.json", "seed": 1, "behavior": "fly" }"#),
        ("no_world.json", r#"{ "world": "missing.json", "seed": 1, "behavior": "waypoints", "waypoints": [[5, 0]] }"#),
        ("neg_timeout.json", r#"{ "world": "world.json", "seed": 1, "behavior": "waypoints", "waypoints": [[5, 0]], "timeout": -1 }"#),
        ("agent_typo.json", r#"{ "seed": 1, "episodez": 3 }"#),
        ("not_json.json", "{"),
    ]);
    for name in ["no_seed", "bad_behavior", "no_world", "neg_timeout", "not_json"] {
        let cfg = dir.path().join(format!("{name}.json"));
        let (code, _, stderr) = usv(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
        assert_eq!(code, 2, "{name}: {stderr}");
    }
    let (code, _, _) = usv(&["train", "--config", s(&dir.path().join("agent_typo.json")), "--out", s(dir.path())]);
    assert_eq!(code, 2);
    let (code, _, _) = usv(&["run", "--config", s(&dir.path().join("missing.json")), "--out", s(dir.path())]);
    assert_eq!(code, 2);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = setup(&[("world.json", OPEN_WATER), ("m.json", &square_mission(30.0))]);
    let cfg = dir.path().join("m.json");
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        usv(&["run", "--config", s(&cfg), "--out", s(&out), "--seed", seed]);
        fs::read(out.join("trajectory.csv")).unwrap()
    };
    assert_eq!(run("3", "a"), run("3", "b"));
    assert_ne!(run("3", "a"), run("4", "c"));
}

#[test]
fn eval_without_table_fails() {
    let dir = setup(&[("a.json", SMALL_AGENT)]);
    let cfg = dir.path().join("a.json");
    let (code, _, _) = usv(&["eval", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code, 2);
    let (code, _, _) =
        usv(&["eval", "--config", s(&cfg), "--out", s(dir.path()), "--table", s(&dir.path().join("nope.json"))]);
    assert_eq!(code, 2);
}

#[test]
fn train_then_eval() {
    let dir = setup(&[("a.json", SMALL_AGENT)]);
    let cfg = dir.path().join("a.json");
    let out = dir.path().join("out");
    assert_eq!(usv(&["train", "--config", s(&cfg), "--out", s(&out)]).0, 0);
    let curve = fs::read_to_string(out.join("learning_curve.csv")).unwrap();
    assert!(curve.starts_with("episode,steps,return,epsilon\n"));
    assert_eq!(curve.lines().count(), 31);
    let table: serde_json::Value = serde_json::from_slice(&fs::read(out.join("qtable.json")).unwrap()).unwrap();
    for (key, v) in table["values"].as_object().unwrap() {
        assert_eq!(key.len(), 5);
        assert_eq!(v.as_array().unwrap().len(), 3);
    }
    let (code, _, _) = usv(&["eval", "--config", s(&cfg), "--out", s(&out), "--table", s(&out.join("qtable.json"))]);
    assert_eq!(code, 0);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("eval_metrics.json")).unwrap()).unwrap();
    assert_eq!(m["episodes"], 12);
    assert!((0.0..=1.0).contains(&m["collision_rate"].as_f64().unwrap()));
}

#[test]
fn blocked_plan_exits_4() {
    let world = r#"{ "objects": [{ "kind": "dock", "shape": "box", "pose": { "x": 10, "y": 0, "yaw": 0 }, "size": [6, 6, 1] }] }"#;
    let dir = setup(&[
        ("w.json", world),
        ("ok.json", r#"{ "world": "w.json", "start": [0, 0], "goal": [20, 0] }"#),
        ("blocked.json", r#"{ "world": "w.json", "start": [0, 0], "goal": [10, 0] }"#),
    ]);
    let out = dir.path().join("out");
    let (code, _, _) = usv(&["plan", "--config", s(&dir.path().join("ok.json")), "--out", s(&out)]);
    assert_eq!(code, 0);
    let path = fs::read_to_string(out.join("path.csv")).unwrap();
    let lines: Vec<&str> = path.lines().collect();
    assert_eq!(lines[0], "index,x,y");
    assert!(lines.len() > 3);
    assert_eq!(lines[1], "0,0,0");
    assert_eq!(*lines.last().unwrap(), format!("{},20,0", lines.len() - 2));
    let (code, _, _) = usv(&["plan", "--config", s(&dir.path().join("blocked.json")), "--out", s(&out)]);
    assert_eq!(code, 4);
}

#[test]
fn empty_world_plan_is_direct() {
    let dir = setup(&[("w.json", "{}"), ("p.json", r#"{ "world": "w.json", "start": [1, 2], "goal": [-3, 4.5] }"#)]);
    let out = dir.path().join("out");
    assert_eq!(usv(&["plan", "--config", s(&dir.path().join("p.json")), "--out", s(&out)]).0, 0);
    assert_eq!(fs::read_to_string(out.join("path.csv")).unwrap(), "index,x,y\n0,1,2\n1,-3,4.5\n");
}

#[test]
fn dataset_layout_and_classify_from_it() {
    let dir = setup(&[("p.json", SMALL_PERCEPTION)]);
    let cfg = dir.path().join("p.json");
    let ds = dir.path().join("ds");
    assert_eq!(usv(&["dataset", "--config", s(&cfg), "--out", s(&ds), "--quiet"]).0, 0);
    for class in ["obstacle_buoy", "totem_buoy", "dock", "deliver_box"] {
        let xyz = fs::read_to_string(ds.join(class).join("0005.xyz")).unwrap();
        assert!(xyz.lines().all(|l| l.split(' ').count() == 3));
        let png = image::open(ds.join("images").join(class).join("0005.png")).unwrap();
        assert_eq!(png.color(), image::ColorType::Rgb8);
        let meta: serde_json::Value =
            serde_json::from_slice(&fs::read(ds.join("images").join(class).join("0005.json")).unwrap()).unwrap();
        assert_eq!(meta["width"], png.width());
        assert_eq!(meta["class"], class);
    }

    let from_disk = format!(r#"{{ "seed": 2, "per_class": 6, "train_per_class": 4, "dataset": "{}" }}"#, s(&ds));
    fs::write(dir.path().join("c.json"), from_disk).unwrap();
    let out = dir.path().join("cl");
    assert_eq!(usv(&["classify", "--config", s(&dir.path().join("c.json")), "--out", s(&out)]).0, 0);
    for file in ["confusion.csv", "confusion_sparse.csv"] {
        let cm = read_confusion(&out.join(file)).unwrap();
        // Six written, four used for training.
        assert!(cm.counts.iter().all(|row| row.iter().sum::<usize>() == 2), "{file}");
    }
}

#[test]
fn classify_rows_sum_to_held_out_counts() {
    let dir = setup(&[("p.json", SMALL_PERCEPTION)]);
    let out = dir.path().join("cl");
    assert_eq!(usv(&["classify", "--config", s(&dir.path().join("p.json")), "--out", s(&out)]).0, 0);
    let cm = read_confusion(&out.join("confusion.csv")).unwrap();
    assert!(cm.counts.iter().all(|row| row.iter().sum::<usize>() == 6));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["test_per_class"], serde_json::json!([6, 6, 6, 6]));
}

#[test]
fn every_command_is_byte_reproducible_across_job_counts() {
    let plan_world = r#"{ "objects": [{ "kind": "obstacle_buoy", "pose": { "x": 8, "y": 0.2, "yaw": 0 } }] }"#;
    let dir = setup(&[
        ("world.json", OPEN_WATER),
        ("m.json", &square_mission(200.0)),
        ("a.json", SMALL_AGENT),
        ("p.json", SMALL_PERCEPTION),
        ("pw.json", plan_world),
        ("plan.json", r#"{ "world": "pw.json", "start": [0, 0], "goal": [16, 0] }"#),
    ]);
    let d = dir.path();
    let go = |tag: &str, jobs: &str| {
        let out = d.join(tag);
        let o = |sub: &str| out.join(sub).to_str().unwrap().to_string();
        let runs: Vec<Vec<String>> = vec![
            vec!["run".into(), "--config".into(), s(&d.join("m.json")).into(), "--out".into(), o("run")],
            vec!["train".into(), "--config".into(), s(&d.join("a.json")).into(), "--out".into(), o("agent")],
            vec![
                "eval".into(),
                "--config".into(),
                s(&d.join("a.json")).into(),
                "--out".into(),
                o("agent"),
                "--table".into(),
                out.join("agent/qtable.json").to_str().unwrap().into(),
            ],
            vec!["dataset".into(), "--config".into(), s(&d.join("p.json")).into(), "--out".into(), o("ds")],
            vec!["classify".into(), "--config".into(), s(&d.join("p.json")).into(), "--out".into(), o("cl")],
            vec!["plan".into(), "--config".into(), s(&d.join("plan.json")).into(), "--out".into(), o("plan")],
        ];
        let mut stdout = vec![];
        for mut args in runs {
            args.extend(["--jobs".to_string(), jobs.to_string()]);
            let argv: Vec<&str> = args.iter().map(String::as_str).collect();
            let (code, so, se) = usv(&argv);
            assert_eq!(code, 0, "{argv:?}: {se}");
            stdout.push(so);
        }
        (snapshot(&out), stdout)
    };
    let (a, sa) = go("a", "1");
    let (b, sb) = go("b", "3");
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(b[k] == *v, "{} differs", k.display());
    }
    assert_eq!(sa, sb);
    assert!(a.len() > 40);
}
