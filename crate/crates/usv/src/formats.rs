//! On-disk formats: XYZ clouds, CSV tables, Q-table and metrics JSON, PNG
//! images. Everything is written byte-for-byte reproducibly: floats use the
//! shortest round-trip form and maps are ordered.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use usv_core::agent::{EpisodeRecord, QParams, QTable, StateKey};
use usv_core::mission::TrajectoryLog;
use usv_core::perception::{ConfusionMatrix, FlatImage};
use usv_core::sim::ObjectKind;
use usv_core::{Frame, PointCloud, Vec2};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// One `x y z` line per point.
pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<(), CliError> {
    let mut w = create(path)?;
    for [x, y, z] in &cloud.points {
        writeln!(w, "{x} {y} {z}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an XYZ file; blank lines and `#` comments are skipped.
pub fn read_xyz(path: &Path) -> Result<PointCloud, CliError> {
    let bad = |n: usize| CliError::Config(format!("{}:{}: expected three numbers", path.display(), n + 1));
    let mut points = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| bad(n))?;
        let [x, y, z] = v[..] else {
            return Err(bad(n));
        };
        points.push([x, y, z]);
    }
    Ok(PointCloud { frame: Frame::Sensor, points })
}

pub fn write_trajectory(path: &Path, log: &TrajectoryLog) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in &log.rows {
        w.serialize(row)?;
    }
    if log.is_empty() {
        w.write_record(["t", "x", "y", "yaw", "est_x", "est_y", "est_yaw", "surge", "yaw_rate", "thrust_l", "thrust_r"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_learning_curve(path: &Path, curve: &[EpisodeRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["episode", "steps", "return", "epsilon"])?;
    for r in curve {
        w.write_record([r.episode.to_string(), r.steps.to_string(), r.ret.to_string(), r.epsilon.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_path(path: &Path, vertices: &[Vec2]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["index", "x", "y"])?;
    for (i, v) in vertices.iter().enumerate() {
        w.write_record([i.to_string(), v.x.to_string(), v.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Every plan of a run, one row per vertex.
pub fn write_plans(path: &Path, plans: &[Vec<Vec2>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["plan", "index", "x", "y"])?;
    for (p, vertices) in plans.iter().enumerate() {
        for (i, v) in vertices.iter().enumerate() {
            w.write_record([p.to_string(), i.to_string(), v.x.to_string(), v.y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows are true classes, columns predicted classes.
pub fn write_confusion(path: &Path, cm: &ConfusionMatrix) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["true".to_string()];
    header.extend(ObjectKind::ALL.iter().map(|k| k.name().to_string()));
    w.write_record(&header)?;
    for kind in ObjectKind::ALL {
        let mut row = vec![kind.name().to_string()];
        row.extend(cm.counts[kind.index()].iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_confusion(path: &Path) -> Result<ConfusionMatrix, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut cm = ConfusionMatrix::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = cm.counts.get_mut(i).ok_or_else(|| CliError::Config("too many confusion rows".into()))?;
        for (j, cell) in rec.iter().skip(1).enumerate() {
            row[j] = cell.parse().map_err(|_| CliError::Config(format!("bad count {cell:?}")))?;
        }
    }
    Ok(cm)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Adds `schema_version` to a metrics object.
pub fn write_metrics(path: &Path, mut metrics: serde_json::Value) -> Result<(), CliError> {
    if let Some(obj) = metrics.as_object_mut() {
        obj.insert("schema_version".into(), SCHEMA_VERSION.into());
    }
    write_json(path, &metrics)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QTableFile {
    pub schema_version: u32,
    pub alpha: f64,
    pub gamma: f64,
    /// State key to `[straight, left, right]` values.
    pub values: BTreeMap<String, [f64; 3]>,
}

pub fn write_qtable(path: &Path, table: &QTable) -> Result<(), CliError> {
    let file = QTableFile {
        schema_version: SCHEMA_VERSION,
        alpha: table.params.alpha,
        gamma: table.params.gamma,
        values: table.values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    };
    write_json(path, &file)
}

/// Loads a table and checks its keys against the environment's key shape.
pub fn read_qtable(path: &Path, sectors: usize, bins: usize) -> Result<QTable, CliError> {
    let file: QTableFile = crate::config::read_json(path)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!("unsupported Q-table schema {}", file.schema_version)));
    }
    let mut table = QTable::new(QParams { alpha: file.alpha, gamma: file.gamma })
        .map_err(|e| CliError::Config(e.to_string()))?;
    for (k, v) in file.values {
        let key: StateKey = k.parse().map_err(|_| CliError::Config(format!("bad state key {k:?}")))?;
        if key.0.len() != sectors || key.0.iter().any(|&b| b as usize >= bins) {
            return Err(CliError::Config(format!("state key {k:?} does not fit the environment")));
        }
        table.values.insert(key, v);
    }
    Ok(table)
}

/// Channels map to red (X-Y), green (Y-Z) and blue (X-Z).
pub fn write_png(path: &Path, img: &FlatImage) -> Result<(), CliError> {
    let (w, h) = (img.width, img.height);
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for row in 0..h {
        for col in 0..w {
            let px = [0, 1, 2].map(|c| (img.get(c, row, col) * 255.0).round() as u8);
            buf.put_pixel(col as u32, row as u32, image::Rgb(px));
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Window metadata written next to each PNG.
pub fn image_sidecar(img: &FlatImage, kind: ObjectKind) -> serde_json::Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "class": kind.name(),
        "width": img.width,
        "height": img.height,
        "meters_per_pixel": img.meters_per_pixel,
        "window_m": [img.width as f64 * img.meters_per_pixel, img.height as f64 * img.meters_per_pixel],
        "points_in_window": img.points_in_window,
        "channels": { "r": "xy", "g": "yz", "b": "xz" },
    })
}
