//! Flattened-pointcloud object recognition: sea-plane removal, noise
//! filtering, clustering, object-frame normalization, tri-planar projection
//! and a nearest-centroid classifier.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cloud::{dist_sq, Frame, Point3, PointCloud};
use crate::geometry::{angle_diff, Pose2D, Vec2};
use crate::sim::{sample_lidar_cloud, stock_shape, LidarParams, ObjectKind, SimError, VesselState, World, WorldObject};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Object classes recognised by the classifier.
pub type ClassLabel = ObjectKind;

pub const NUM_CLASSES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error("training set has no samples for: {0:?}")]
    MissingClasses(Vec<ClassLabel>),
    #[error("image is {got:?}, model expects {expected:?}")]
    ShapeMismatch { got: (usize, usize), expected: (usize, usize) },
    #[error("no object cluster found")]
    NoCluster,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Plane `n · p + d = 0` with unit normal, `n.z >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Plane {
    pub normal: Point3,
    pub d: f64,
}

impl Plane {
    pub fn through(a: &Point3, b: &Point3, c: &Point3) -> Option<Plane> {
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let mut n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let len = libm::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        if !(len > 1e-12) {
            return None;
        }
        let flip = if n[2] < 0.0 { -1.0 } else { 1.0 };
        for c in n.iter_mut() {
            *c *= flip / len;
        }
        let d = -(n[0] * a[0] + n[1] * a[1] + n[2] * a[2]);
        Some(Plane { normal: n, d })
    }

    pub fn distance(&self, p: &Point3) -> f64 {
        (self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] + self.d).abs()
    }

    pub fn coeffs(&self) -> [f64; 4] {
        [self.normal[0], self.normal[1], self.normal[2], self.d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier distance, m.
    pub epsilon: f64,
    pub min_inlier_fraction: f64,
    pub min_points: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams { iterations: 200, epsilon: 0.15, min_inlier_fraction: 0.3, min_points: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeaRemoval {
    pub cloud: PointCloud,
    /// `None` when no plane gathered enough inliers; the cloud is then unchanged.
    pub plane: Option<Plane>,
}

/// Fits the dominant plane with seeded RANSAC and drops its inliers.
pub fn remove_sea_plane(cloud: &PointCloud, params: &RansacParams) -> SeaRemoval {
    let pts = &cloud.points;
    let unchanged = || SeaRemoval { cloud: cloud.clone(), plane: None };
    if pts.len() < params.min_points.max(3) {
        return unchanged();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..params.iterations {
        let idx = index::sample(&mut rng, pts.len(), 3);
        let Some(plane) = Plane::through(&pts[idx.index(0)], &pts[idx.index(1)], &pts[idx.index(2)]) else {
            continue;
        };
        let count = pts.iter().filter(|p| plane.distance(p) <= params.epsilon).count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, plane));
        }
    }
    match best {
        Some((count, plane)) if count as f64 >= params.min_inlier_fraction * pts.len() as f64 => {
            let plane = refine_plane(pts, plane, params.epsilon / 3.0);
            let kept = pts.iter().filter(|p| plane.distance(p) > params.epsilon).copied().collect();
            SeaRemoval { cloud: PointCloud { frame: cloud.frame, points: kept }, plane: Some(plane) }
        }
        _ => unchanged(),
    }
}

/// Least-squares refit of `plane` on the points within `band` of it: the
/// normal becomes the eigenvector of the smallest covariance eigenvalue,
/// found by inverse iteration started from the current normal. Count-based
/// scoring alone lets slightly tilted planes win by grazing object bases.
fn refine_plane(pts: &[Point3], plane: Plane, band: f64) -> Plane {
    let mut plane = plane;
    for _ in 0..2 {
        let near: Vec<&Point3> = pts.iter().filter(|p| plane.distance(p) <= band).collect();
        if near.len() < 3 {
            return plane;
        }
        let n = near.len() as f64;
        let mut mean = [0.0; 3];
        for p in &near {
            for k in 0..3 {
                mean[k] += p[k] / n;
            }
        }
        let mut cov = [[0.0; 3]; 3];
        for p in &near {
            let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += d[i] * d[j];
                }
            }
        }
        let trace = cov[0][0] + cov[1][1] + cov[2][2];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] += 1e-12 * trace + f64::MIN_POSITIVE;
        }
        let mut v = plane.normal;
        for _ in 0..8 {
            let Some(x) = solve3(&cov, &v) else {
                break;
            };
            let len = libm::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
            if !(len > 0.0 && len.is_finite()) {
                break;
            }
            let flip = if x[2] < 0.0 { -1.0 } else { 1.0 };
            v = [flip * x[0] / len, flip * x[1] / len, flip * x[2] / len];
        }
        plane = Plane { normal: v, d: -(v[0] * mean[0] + v[1] * mean[1] + v[2] * mean[2]) };
    }
    plane
}

fn solve3(m: &[[f64; 3]; 3], b: &Point3) -> Option<Point3> {
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = *m;
        for r in 0..3 {
            mk[r][k] = b[r];
        }
        *o = det(&mk) / d;
    }
    Some(out)
}

type Cell = [i64; 3];

fn cell_of(p: &Point3, size: f64) -> Cell {
    [libm::floor(p[0] / size) as i64, libm::floor(p[1] / size) as i64, libm::floor(p[2] / size) as i64]
}

/// Uniform grid over point indices, cell edge equal to the query radius.
struct Grid {
    size: f64,
    cells: BTreeMap<Cell, Vec<usize>>,
}

impl Grid {
    fn new(points: &[Point3], size: f64) -> Grid {
        let mut cells: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, size)).or_default().push(i);
        }
        Grid { size, cells }
    }

    fn for_each_near(&self, p: &Point3, mut f: impl FnMut(usize)) {
        let c = cell_of(p, self.size);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        ids.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }
}

/// Drops points with fewer than `k` other points within `radius`.
pub fn denoise(cloud: &PointCloud, k: usize, radius: f64) -> Result<PointCloud, PerceptionError> {
    if k == 0 {
        return Err(PerceptionError::InvalidParam("k must be >= 1"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(PerceptionError::InvalidParam("radius must be positive"));
    }
    let pts = &cloud.points;
    let grid = Grid::new(pts, radius);
    let r2 = radius * radius;
    let kept = pts
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            let mut n = 0;
            grid.for_each_near(p, |j| {
                if j != *i && dist_sq(p, &pts[j]) <= r2 {
                    n += 1;
                }
            });
            n >= k
        })
        .map(|(_, p)| *p)
        .collect();
    Ok(PointCloud { frame: cloud.frame, points: kept })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage Euclidean clustering. Clusters smaller than `min_size` are
/// dropped; the rest are ordered by size (descending), then by centroid.
pub fn cluster(cloud: &PointCloud, link_distance: f64, min_size: usize) -> Result<Vec<PointCloud>, PerceptionError> {
    if !(link_distance.is_finite() && link_distance > 0.0) {
        return Err(PerceptionError::InvalidParam("link_distance must be positive"));
    }
    let pts = &cloud.points;
    let grid = Grid::new(pts, link_distance);
    let l2 = link_distance * link_distance;
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    for i in 0..pts.len() {
        grid.for_each_near(&pts[i], |j| {
            if j > i && dist_sq(&pts[i], &pts[j]) <= l2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        });
    }
    let mut groups: BTreeMap<usize, Vec<Point3>> = BTreeMap::new();
    for (i, p) in pts.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(*p);
    }
    let mut out: Vec<(Point3, PointCloud)> = groups
        .into_values()
        .filter(|g| g.len() >= min_size.max(1))
        .map(|g| {
            let c = PointCloud { frame: cloud.frame, points: g };
            (c.centroid().unwrap_or_default(), c)
        })
        .collect();
    out.sort_by(|(ca, a), (cb, b)| {
        b.len().cmp(&a.len()).then_with(|| {
            ca.iter().zip(cb).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
        })
    });
    Ok(out.into_iter().map(|(_, c)| c).collect())
}

/// Horizontal centroid distance below which the viewing direction is undefined.
pub const NORMALIZE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub cloud: PointCloud,
    /// Rotation applied about z, rad.
    pub yaw: f64,
    /// Set when the centroid was directly above or below the sensor and the
    /// yaw was left unchanged.
    pub degenerate: bool,
}

/// Moves the origin to the cluster centroid and yaws the frame so that +x
/// points from the sensor toward the centroid. z is left vertical.
pub fn normalize_to_object_frame(cloud: &PointCloud) -> Result<Normalized, PerceptionError> {
    normalize_with(cloud, true)
}

/// Centroid shift only; `rotate = false` is the ablation used to show what
/// the yaw step buys.
pub fn normalize_with(cloud: &PointCloud, rotate: bool) -> Result<Normalized, PerceptionError> {
    let c = cloud.centroid().ok_or(PerceptionError::EmptyCloud)?;
    let horiz = libm::hypot(c[0], c[1]);
    let degenerate = horiz < NORMALIZE_EPS;
    let yaw = if rotate && !degenerate { libm::atan2(c[1], c[0]) } else { 0.0 };
    let (s, co) = (libm::sin(-yaw), libm::cos(-yaw));
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let (x, y) = (p[0] - c[0], p[1] - c[1]);
            [co * x - s * y, s * x + co * y, p[2] - c[2]]
        })
        .collect();
    Ok(Normalized { cloud: PointCloud { frame: Frame::Object, points }, yaw, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ImageParams {
    pub width: usize,
    pub height: usize,
    pub meters_per_pixel: f64,
}

impl Default for ImageParams {
    fn default() -> Self {
        ImageParams { width: 32, height: 32, meters_per_pixel: 0.25 }
    }
}

/// Three occupancy channels (X-Y, Y-Z, X-Z), each `height × width`, row-major,
/// stored channel after channel. Values are in [0, 1].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FlatImage {
    pub width: usize,
    pub height: usize,
    pub meters_per_pixel: f64,
    pub data: Vec<f64>,
    /// Number of input points inside the window box.
    pub points_in_window: usize,
}

impl FlatImage {
    pub fn blank(width: usize, height: usize, meters_per_pixel: f64) -> FlatImage {
        FlatImage { width, height, meters_per_pixel, data: alloc::vec![0.0; 3 * width * height], points_in_window: 0 }
    }

    pub fn is_blank(&self) -> bool {
        self.points_in_window == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[c * self.width * self.height + row * self.width + col]
    }

    /// Euclidean distance over all pixels.
    pub fn distance(&self, other: &FlatImage) -> f64 {
        libm::sqrt(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Mean absolute difference over pixels occupied in either image.
    pub fn occupied_mad(&self, other: &FlatImage) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (a, b) in self.data.iter().zip(&other.data) {
            if *a > 0.0 || *b > 0.0 {
                sum += (a - b).abs();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

fn bin(v: f64, mpp: f64, size: usize) -> Option<usize> {
    let b = libm::floor(v / mpp + size as f64 / 2.0);
    (b >= 0.0 && b < size as f64).then_some(b as usize)
}

/// Projects an object-frame cloud onto the X-Y, Y-Z and X-Z planes. Image
/// columns run along the first axis of each pair and rows along the second;
/// every channel is scaled by its own maximum bin count. Points outside the
/// window box are ignored.
pub fn flatten(cloud: &PointCloud, params: &ImageParams) -> Result<FlatImage, PerceptionError> {
    if cloud.is_empty() {
        return Err(PerceptionError::EmptyCloud);
    }
    let (w, h, mpp) = (params.width, params.height, params.meters_per_pixel);
    if w == 0 || h == 0 || !(mpp.is_finite() && mpp > 0.0) {
        return Err(PerceptionError::InvalidParam("image size"));
    }
    let mut img = FlatImage::blank(w, h, mpp);
    let n = w * h;
    for p in &cloud.points {
        // y serves as a column in Y-Z and as a row in X-Y.
        let (Some(x), Some(y), Some(z)) = (bin(p[0], mpp, w), bin(p[1], mpp, w.min(h)), bin(p[2], mpp, h)) else {
            continue;
        };
        img.data[y * w + x] += 1.0;
        img.data[n + z * w + y] += 1.0;
        img.data[2 * n + z * w + x] += 1.0;
        img.points_in_window += 1;
    }
    for ch in 0..3 {
        let slice = &mut img.data[ch * n..(ch + 1) * n];
        let max = slice.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            slice.iter_mut().for_each(|v| *v /= max);
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PipelineParams {
    pub ransac: RansacParams,
    pub denoise_k: usize,
    pub denoise_radius: f64,
    pub link_distance: f64,
    pub min_cluster_size: usize,
    pub image: ImageParams,
    pub normalize: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            ransac: RansacParams::default(),
            denoise_k: 2,
            denoise_radius: 0.5,
            link_distance: 0.8,
            min_cluster_size: 8,
            image: ImageParams::default(),
            normalize: true,
        }
    }
}

/// Sea removal, denoising and clustering of a raw sensor-frame scan.
pub fn extract_objects(cloud: &PointCloud, params: &PipelineParams) -> Result<Vec<PointCloud>, PerceptionError> {
    let sea = remove_sea_plane(cloud, &params.ransac);
    let clean = denoise(&sea.cloud, params.denoise_k, params.denoise_radius)?;
    cluster(&clean, params.link_distance, params.min_cluster_size)
}

/// Normalizes one sensor-frame cluster and flattens it.
pub fn describe(cluster: &PointCloud, params: &PipelineParams) -> Result<FlatImage, PerceptionError> {
    let norm = normalize_with(cluster, params.normalize)?;
    flatten(&norm.cloud, &params.image)
}

/// Per-class mean images.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CentroidModel {
    pub means: Vec<FlatImage>,
    pub priors: [f64; NUM_CLASSES],
    pub trained_on: [usize; NUM_CLASSES],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: ClassLabel,
    /// Softmin probability of the winning class over the class distances.
    pub score: f64,
    pub distance: f64,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
}

/// Pixel-wise mean per class. Samples are summed in a canonical order so the
/// model does not depend on input order.
pub fn train_centroid_model(samples: &[(ClassLabel, FlatImage)]) -> Result<CentroidModel, PerceptionError> {
    let Some((_, first)) = samples.first() else {
        return Err(PerceptionError::MissingClasses(ObjectKind::ALL.to_vec()));
    };
    let (w, h, mpp) = (first.width, first.height, first.meters_per_pixel);
    let mut per_class: [Vec<&FlatImage>; NUM_CLASSES] = Default::default();
    for (label, img) in samples {
        if (img.width, img.height) != (w, h) {
            return Err(PerceptionError::ShapeMismatch { got: (img.width, img.height), expected: (w, h) });
        }
        per_class[label.index()].push(img);
    }
    let missing: Vec<ClassLabel> = ObjectKind::ALL.into_iter().filter(|k| per_class[k.index()].is_empty()).collect();
    if !missing.is_empty() {
        return Err(PerceptionError::MissingClasses(missing));
    }
    let total = samples.len() as f64;
    let mut means = Vec::with_capacity(NUM_CLASSES);
    let mut priors = [0.0; NUM_CLASSES];
    let mut trained_on = [0; NUM_CLASSES];
    for (k, imgs) in per_class.iter_mut().enumerate() {
        imgs.sort_by(|a, b| lex_cmp(&a.data, &b.data));
        let mut mean = FlatImage::blank(w, h, mpp);
        for img in imgs.iter() {
            for (m, v) in mean.data.iter_mut().zip(&img.data) {
                *m += v;
            }
        }
        let n = imgs.len() as f64;
        mean.data.iter_mut().for_each(|m| *m /= n);
        mean.points_in_window = imgs.iter().map(|i| i.points_in_window).sum::<usize>() / imgs.len();
        means.push(mean);
        priors[k] = n / total;
        trained_on[k] = imgs.len();
    }
    Ok(CentroidModel { means, priors, trained_on })
}

impl CentroidModel {
    /// Nearest class mean; ties keep the earlier class.
    pub fn classify(&self, image: &FlatImage) -> Result<Classification, PerceptionError> {
        let m = &self.means[0];
        if (image.width, image.height) != (m.width, m.height) {
            return Err(PerceptionError::ShapeMismatch { got: (image.width, image.height), expected: (m.width, m.height) });
        }
        let dists: Vec<f64> = self.means.iter().map(|m| m.distance(image)).collect();
        let mut best = 0;
        for (k, d) in dists.iter().enumerate() {
            if *d < dists[best] {
                best = k;
            }
        }
        let denom: f64 = dists.iter().map(|d| libm::exp(dists[best] - d)).sum();
        Ok(Classification { label: ObjectKind::ALL[best], score: 1.0 / denom, distance: dists[best] })
    }
}

/// Square confusion matrix, `counts[true][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ConfusionMatrix {
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..NUM_CLASSES).map(|k| self.counts[k][k]).sum::<usize>() as f64 / total as f64
    }
}

/// Randomisation of the synthetic object scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SceneParams {
    pub range_min: f64,
    pub range_max: f64,
    /// Probability that part of the object is hidden.
    pub occlusion_prob: f64,
    /// Largest hidden fraction of the object's angular extent.
    pub max_occlusion: f64,
    pub lidar: LidarParams,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            range_min: 4.0,
            range_max: 12.0,
            occlusion_prob: 0.5,
            max_occlusion: 0.3,
            lidar: LidarParams::default(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.range_min > 0.0 && self.range_min <= self.range_max && self.range_max.is_finite()) {
            return Err(PerceptionError::InvalidParam("range bounds"));
        }
        if !((0.0..=1.0).contains(&self.occlusion_prob) && (0.0..1.0).contains(&self.max_occlusion)) {
            return Err(PerceptionError::InvalidParam("occlusion"));
        }
        self.lidar.validate()?;
        Ok(())
    }
}

/// One stock object at `range` along world bearing `bearing` from a vessel
/// at the origin.
pub fn single_object_world(kind: ClassLabel, range: f64, bearing: f64, object_yaw: f64) -> World {
    let center = Vec2::from_angle(bearing) * range;
    let (shape, height) = stock_shape(kind, center, object_yaw);
    World { objects: alloc::vec![WorldObject { id: 0, kind, shape, height }] }
}

/// Hides the points inside an azimuth wedge covering `fraction` of the
/// cluster's angular extent, starting at `offset` (0..1) of the remaining span.
pub fn occlude(cloud: &PointCloud, fraction: f64, offset: f64) -> PointCloud {
    let Some(c) = cloud.centroid() else {
        return cloud.clone();
    };
    let center = libm::atan2(c[1], c[0]);
    let rel: Vec<f64> = cloud.points.iter().map(|p| angle_diff(libm::atan2(p[1], p[0]), center)).collect();
    let lo = rel.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) * fraction;
    let start = lo + (hi - lo - width) * offset;
    let points =
        cloud.points.iter().zip(&rel).filter(|(_, a)| !(**a >= start && **a <= start + width)).map(|(p, _)| *p).collect();
    PointCloud { frame: cloud.frame, points }
}

/// Keeps at most `max_points`, chosen uniformly, in their original order.
pub fn subsample<R: Rng + ?Sized>(cloud: &PointCloud, max_points: usize, rng: &mut R) -> PointCloud {
    if cloud.len() <= max_points {
        return cloud.clone();
    }
    let mut idx = index::sample(rng, cloud.len(), max_points).into_vec();
    idx.sort_unstable();
    PointCloud { frame: cloud.frame, points: idx.into_iter().map(|i| cloud.points[i]).collect() }
}

/// Scans a randomly placed stock object and returns its segmented,
/// sensor-frame cluster.
pub fn synthetic_sample<R: Rng + ?Sized>(
    kind: ClassLabel,
    rng: &mut R,
    scene: &SceneParams,
    pipeline: &PipelineParams,
) -> Result<PointCloud, PerceptionError> {
    scene.validate()?;
    let range = rng.random_range(scene.range_min..=scene.range_max);
    let bearing = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
    let object_yaw = rng.random_range(0.0..core::f64::consts::PI);
    let vessel_yaw = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
    let world = single_object_world(kind, range, bearing, object_yaw);
    let vessel = VesselState::at_rest(Pose2D::new(0.0, 0.0, vessel_yaw));
    let scan = sample_lidar_cloud(&world, &vessel, &scene.lidar, rng)?;
    let mut ransac = pipeline.ransac;
    ransac.seed = rng.random();
    let params = PipelineParams { ransac, ..*pipeline };
    let obj = extract_objects(&scan, &params)?.into_iter().next().ok_or(PerceptionError::NoCluster)?;
    if rng.random_bool(scene.occlusion_prob) {
        let fraction = rng.random_range(0.0..scene.max_occlusion);
        let offset = rng.random_range(0.0..1.0);
        return Ok(occlude(&obj, fraction, offset));
    }
    Ok(obj)
}

/// Sample ids of one class occupy one RNG stream block.
fn sample_rng(seed: u64, kind: ClassLabel, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind.index() as u64) << 32) | id as u64);
    rng
}

/// Synthetic sample `id` of class `kind`; independent of every other sample.
pub fn synthetic_sample_at(
    seed: u64,
    kind: ClassLabel,
    id: usize,
    scene: &SceneParams,
    pipeline: &PipelineParams,
) -> Result<PointCloud, PerceptionError> {
    synthetic_sample(kind, &mut sample_rng(seed, kind, id), scene, pipeline)
}

/// `per_class` samples of every class, class by class.
pub fn synthetic_dataset(
    seed: u64,
    per_class: usize,
    scene: &SceneParams,
    pipeline: &PipelineParams,
) -> Result<Vec<(ClassLabel, PointCloud)>, PerceptionError> {
    let mut out = Vec::with_capacity(per_class * NUM_CLASSES);
    for kind in ObjectKind::ALL {
        for id in 0..per_class {
            out.push((kind, synthetic_sample_at(seed, kind, id, scene, pipeline)?));
        }
    }
    Ok(out)
}

/// Random thinning of training clouds to mimic far-range returns.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SparseAugment {
    pub min_points: usize,
    pub max_points: usize,
}

impl Default for SparseAugment {
    fn default() -> Self {
        SparseAugment { min_points: 8, max_points: 15 }
    }
}

/// Thinning randomness for item `index` of a batch; independent of every
/// other item, so batches can be processed in any order.
fn item_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Image of one training cloud and, when `augment` is set, of one thinned
/// copy of it.
pub fn training_images_for(
    kind: ClassLabel,
    cloud: &PointCloud,
    index: usize,
    pipeline: &PipelineParams,
    augment: Option<SparseAugment>,
    seed: u64,
) -> Result<Vec<(ClassLabel, FlatImage)>, PerceptionError> {
    let mut out = alloc::vec![(kind, describe(cloud, pipeline)?)];
    if let Some(aug) = augment {
        if aug.min_points == 0 || aug.min_points > aug.max_points {
            return Err(PerceptionError::InvalidParam("sparse augmentation bounds"));
        }
        let mut rng = item_rng(seed, index);
        let n = rng.random_range(aug.min_points..=aug.max_points);
        out.push((kind, describe(&subsample(cloud, n, &mut rng), pipeline)?));
    }
    Ok(out)
}

/// Flattens every cloud and, when `augment` is set, adds one thinned copy of
/// each.
pub fn training_images(
    clouds: &[(ClassLabel, PointCloud)],
    pipeline: &PipelineParams,
    augment: Option<SparseAugment>,
    seed: u64,
) -> Result<Vec<(ClassLabel, FlatImage)>, PerceptionError> {
    let mut out = Vec::with_capacity(clouds.len() * 2);
    for (i, (kind, cloud)) in clouds.iter().enumerate() {
        out.extend(training_images_for(*kind, cloud, i, pipeline, augment, seed)?);
    }
    Ok(out)
}

/// Predicted label for test item `index`, thinned to `max_points` first
/// when given.
pub fn predict_item(
    model: &CentroidModel,
    cloud: &PointCloud,
    index: usize,
    pipeline: &PipelineParams,
    max_points: Option<usize>,
    seed: u64,
) -> Result<ClassLabel, PerceptionError> {
    let img = match max_points {
        Some(n) => describe(&subsample(cloud, n, &mut item_rng(seed, index)), pipeline)?,
        None => describe(cloud, pipeline)?,
    };
    Ok(model.classify(&img)?.label)
}

/// Confusion matrix of `model` over labeled clouds, each optionally thinned
/// to `max_points` first.
pub fn evaluate_model(
    model: &CentroidModel,
    clouds: &[(ClassLabel, PointCloud)],
    pipeline: &PipelineParams,
    max_points: Option<usize>,
    seed: u64,
) -> Result<ConfusionMatrix, PerceptionError> {
    let mut cm = ConfusionMatrix::default();
    for (i, (kind, cloud)) in clouds.iter().enumerate() {
        cm.record(*kind, predict_item(model, cloud, i, pipeline, max_points, seed)?);
    }
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid_plane(n: usize, z: f64) -> Vec<Point3> {
        let side = libm::ceil(libm::sqrt(n as f64)) as usize;
        (0..n).map(|i| [(i % side) as f64 * 0.3 - 5.0, (i / side) as f64 * 0.3 - 5.0, z]).collect()
    }

    fn cylinder(n: usize, cx: f64, cy: f64, r: f64) -> Vec<Point3> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.7;
                [cx + r * libm::cos(a), cy + r * libm::sin(a), -0.5 + 0.05 * i as f64]
            })
            .collect()
    }

    #[test]
    fn ransac_removes_exact_plane() {
        let mut pts = grid_plane(1000, -1.0);
        let cyl = cylinder(50, 2.0, 1.0, 0.4);
        pts.extend(&cyl);
        let out = remove_sea_plane(&PointCloud::new(Frame::Sensor, pts), &RansacParams::default());
        let plane = out.plane.unwrap();
        let c = plane.coeffs();
        for (a, b) in c.iter().zip([0.0, 0.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-9, "{c:?}");
        }
        assert_eq!(out.cloud.points, cyl);
    }

    #[test]
    fn ransac_pure_plane_and_small_inputs() {
        let plane = PointCloud::new(Frame::Sensor, grid_plane(400, -2.0));
        assert!(remove_sea_plane(&plane, &RansacParams::default()).cloud.is_empty());
        let tiny = PointCloud::new(Frame::Sensor, vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        let out = remove_sea_plane(&tiny, &RansacParams::default());
        assert!(out.plane.is_none());
        assert_eq!(out.cloud, tiny);
    }

    #[test]
    fn ransac_is_seeded() {
        let mut pts = grid_plane(500, -2.0);
        pts.extend(cylinder(200, 1.0, 1.0, 1.0));
        let cloud = PointCloud::new(Frame::Sensor, pts);
        let p = RansacParams::default();
        assert_eq!(remove_sea_plane(&cloud, &p), remove_sea_plane(&cloud, &p));
    }

    #[test]
    fn denoise_examples() {
        let mut pts: Vec<Point3> = (0..50).map(|i| [0.01 * i as f64, 0.0, 0.0]).collect();
        pts.push([100.0, 100.0, 100.0]);
        let out = denoise(&PointCloud::new(Frame::Sensor, pts.clone()), 3, 0.2).unwrap();
        assert_eq!(out.points, pts[..50]);
        assert!(denoise(&PointCloud::default(), 1, 1.0).unwrap().is_empty());
        assert!(denoise(&PointCloud::default(), 0, 1.0).is_err());
    }

    #[test]
    fn clustering_examples() {
        let blob = |cx: f64, n: usize| (0..n).map(move |i| [cx + 0.01 * (i % 10) as f64, 0.01 * (i / 10) as f64, 0.0]);
        let pts: Vec<Point3> = blob(0.0, 100).chain(blob(10.0, 100)).collect();
        let out = cluster(&PointCloud::new(Frame::Sensor, pts), 1.0, 8).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].centroid().unwrap()[0] < out[1].centroid().unwrap()[0]);

        let one: Vec<Point3> = blob(0.0, 30).collect();
        assert_eq!(cluster(&PointCloud::new(Frame::Sensor, one), 1.0, 8).unwrap().len(), 1);

        let chain: Vec<Point3> = (0..40).map(|i| [0.99 * i as f64, 0.0, 0.0]).collect();
        assert_eq!(cluster(&PointCloud::new(Frame::Sensor, chain), 1.0, 1).unwrap().len(), 1);

        let bigger: Vec<Point3> = blob(0.0, 10).chain(blob(5.0, 30)).collect();
        let out = cluster(&PointCloud::new(Frame::Sensor, bigger), 1.0, 20).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 30);
    }

    #[test]
    fn normalization_centroid_and_idempotence() {
        let pts = cylinder(60, 3.0, 4.0, 0.5);
        let n1 = normalize_to_object_frame(&PointCloud::new(Frame::Sensor, pts)).unwrap();
        let c = n1.cloud.centroid().unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-12));
        assert!((n1.yaw - libm::atan2(4.0, 3.0)).abs() < 1e-2);
        let n2 = normalize_to_object_frame(&n1.cloud).unwrap();
        assert!(n2.degenerate);
        for (a, b) in n1.cloud.points.iter().zip(&n2.cloud.points) {
            assert!(dist_sq(a, b) < 1e-20);
        }
        assert_eq!(normalize_to_object_frame(&PointCloud::default()), Err(PerceptionError::EmptyCloud));
    }

    #[test]
    fn flatten_examples() {
        let p = ImageParams::default();
        let img = flatten(&PointCloud::new(Frame::Object, vec![[0.0; 3]]), &p).unwrap();
        for ch in 0..3 {
            assert_eq!(img.channel(ch).iter().filter(|v| **v > 0.0).count(), 1);
            assert_eq!(img.get(ch, 16, 16), 1.0);
        }

        let line: Vec<Point3> = (0..10).map(|i| [0.1, 0.1, -1.0 + 0.25 * i as f64]).collect();
        let img = flatten(&PointCloud::new(Frame::Object, line.clone()), &p).unwrap();
        assert_eq!(img.channel(0).iter().filter(|v| **v > 0.0).count(), 1);
        for ch in [1, 2] {
            let cols: Vec<usize> =
                (0..32).flat_map(|r| (0..32).map(move |c| (r, c))).filter(|&(r, c)| img.get(ch, r, c) > 0.0).map(|(_, c)| c).collect();
            assert_eq!(cols.len(), 10);
            assert!(cols.iter().all(|&c| c == 16));
        }
        assert_eq!(img, flatten(&PointCloud::new(Frame::Object, line), &p).unwrap());

        let far = flatten(&PointCloud::new(Frame::Object, vec![[50.0, 0.0, 0.0]]), &p).unwrap();
        assert!(far.is_blank());
        assert!(far.data.iter().all(|v| *v == 0.0));
    }

    fn image_with(value: f64, at: usize) -> FlatImage {
        let mut img = FlatImage::blank(32, 32, 0.25);
        img.data[at] = value;
        img.points_in_window = 1;
        img
    }

    #[test]
    fn centroid_model_examples() {
        let samples: Vec<(ClassLabel, FlatImage)> =
            ObjectKind::ALL.iter().enumerate().map(|(k, &c)| (c, image_with(1.0, k * 100))).collect();
        let model = train_centroid_model(&samples).unwrap();
        for (label, img) in &samples {
            assert_eq!(&model.means[label.index()].data, &img.data);
            let r = model.classify(img).unwrap();
            assert_eq!(r.label, *label);
            assert_eq!(r.distance, 0.0);
            assert!(r.score > 0.25 && r.score <= 1.0);
        }

        let mut doubled = samples.clone();
        doubled.extend(samples.iter().cloned());
        assert_eq!(train_centroid_model(&doubled).unwrap().means, model.means);

        let missing = train_centroid_model(&samples[..2]).unwrap_err();
        assert_eq!(missing, PerceptionError::MissingClasses(vec![ObjectKind::Dock, ObjectKind::DeliverBox]));
    }

    #[test]
    fn classify_ties_take_first_class() {
        let samples: Vec<(ClassLabel, FlatImage)> = ObjectKind::ALL.iter().map(|&c| (c, image_with(1.0, 0))).collect();
        let model = train_centroid_model(&samples).unwrap();
        let r = model.classify(&image_with(0.5, 7)).unwrap();
        assert_eq!(r.label, ObjectKind::ObstacleBuoy);
        assert!((r.score - 0.25).abs() < 1e-12);
    }

    #[test]
    fn occlusion_and_subsample() {
        let pts: Vec<Point3> = (0..100).map(|i| [10.0, -1.0 + 0.02 * i as f64, 0.0]).collect();
        let cloud = PointCloud::new(Frame::Sensor, pts);
        assert!(occlude(&cloud, 0.0, 0.5).len() >= 99);
        let half = occlude(&cloud, 0.5, 0.0);
        assert!(half.len() < 60 && half.len() > 40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sparse = subsample(&cloud, 15, &mut rng);
        assert_eq!(sparse.len(), 15);
        assert!(sparse.points.windows(2).all(|w| w[0][1] < w[1][1]));
    }

    #[test]
    fn synthetic_samples_are_segmented_objects() {
        let scene = SceneParams { occlusion_prob: 0.0, ..SceneParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in ObjectKind::ALL {
            let c = synthetic_sample(kind, &mut rng, &scene, &PipelineParams::default()).unwrap();
            assert!(c.len() >= 8, "{kind}: {}", c.len());
            // Nothing from the sea surface survives.
            assert!(c.points.iter().all(|p| p[2] > -2.0 + 0.1), "{kind}");
        }
    }
}
