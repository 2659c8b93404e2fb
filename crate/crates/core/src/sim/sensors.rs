use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::world::slab;
use super::{ObjectKind, Shape, SimError, VesselState, World};
use crate::cloud::{Frame, Point3, PointCloud};
use crate::geometry::{wrap_angle, Pose2D, Vec2};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SensorNoise {
    /// Per-axis GPS standard deviation, m.
    pub gps_sigma: f64,
    /// Compass standard deviation, rad.
    pub compass_sigma: f64,
    pub seed: u64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise { gps_sigma: 0.0, compass_sigma: 0.0, seed: 0 }
    }
}

impl SensorNoise {
    pub fn noiseless(seed: u64) -> Self {
        SensorNoise { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.gps_sigma.is_finite() && self.gps_sigma >= 0.0) {
            return Err(SimError::InvalidParam("gps_sigma"));
        }
        if !(self.compass_sigma.is_finite() && self.compass_sigma >= 0.0) {
            return Err(SimError::InvalidParam("compass_sigma"));
        }
        Ok(())
    }
}

// Stream ids carved out of the single per-simulation seed.
const GPS_STREAM: u64 = 1;
const COMPASS_STREAM: u64 = 2;
const LIDAR_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    // sigma is validated finite and non-negative
    Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
}

#[derive(Debug, Clone)]
pub struct Gps {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl Gps {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Gps { sigma, rng: stream(seed, GPS_STREAM) }
    }

    /// Truth position plus zero-mean Gaussian noise on each axis.
    pub fn read(&mut self, vessel: &VesselState) -> Vec2 {
        if self.sigma == 0.0 {
            return vessel.pose.position();
        }
        let dx = gaussian(&mut self.rng, self.sigma);
        let dy = gaussian(&mut self.rng, self.sigma);
        Vec2::new(vessel.pose.x + dx, vessel.pose.y + dy)
    }
}

#[derive(Debug, Clone)]
pub struct Compass {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl Compass {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Compass { sigma, rng: stream(seed, COMPASS_STREAM) }
    }

    /// Truth yaw plus Gaussian noise, wrapped into `(-π, π]`.
    pub fn read(&mut self, vessel: &VesselState) -> f64 {
        if self.sigma == 0.0 {
            return vessel.pose.yaw;
        }
        wrap_angle(vessel.pose.yaw + gaussian(&mut self.rng, self.sigma))
    }
}

/// Noise-free body-frame odometry: the displacement between two truth poses
/// expressed in the earlier pose's body frame, plus the yaw change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Odometry {
    pub forward: f64,
    pub lateral: f64,
    pub dyaw: f64,
}

impl Odometry {
    pub fn between(prev: &Pose2D, next: &Pose2D) -> Self {
        let local = prev.to_local(next.position());
        Odometry { forward: local.x, lateral: local.y, dyaw: wrap_angle(next.yaw - prev.yaw) }
    }

    /// World-frame displacement under an (estimated) heading.
    pub fn delta_at(&self, yaw: f64) -> Vec2 {
        Vec2::new(self.forward, self.lateral).rotate(yaw)
    }
}

/// All noisy sensors of one simulation, each drawing from its own stream of
/// the shared seed.
#[derive(Debug, Clone)]
pub struct SensorSuite {
    pub gps: Gps,
    pub compass: Compass,
    pub lidar_rng: ChaCha8Rng,
}

impl SensorSuite {
    pub fn new(noise: &SensorNoise) -> Self {
        SensorSuite {
            gps: Gps::new(noise.gps_sigma, noise.seed),
            compass: Compass::new(noise.compass_sigma, noise.seed),
            lidar_rng: stream(noise.seed, LIDAR_STREAM),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LidarParams {
    pub rays_h: usize,
    pub rays_v: usize,
    /// Horizontal field of view, rad. `2π` gives a full sweep.
    pub fov_h: f64,
    pub elev_min: f64,
    pub elev_max: f64,
    pub max_range: f64,
    /// Sensor height above the sea surface, m.
    pub sensor_height: f64,
    pub range_sigma: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        LidarParams {
            rays_h: 720,
            rays_v: 32,
            fov_h: TAU,
            elev_min: -16.0_f64.to_radians(),
            elev_max: 15.0_f64.to_radians(),
            max_range: 30.0,
            sensor_height: 2.0,
            range_sigma: 0.01,
        }
    }
}

impl LidarParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.rays_h == 0 || self.rays_v == 0 {
            return Err(SimError::InvalidParam("lidar ray counts"));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(SimError::InvalidParam("max_range"));
        }
        if !(self.sensor_height.is_finite() && self.sensor_height > 0.0) {
            return Err(SimError::InvalidParam("sensor_height"));
        }
        if !(self.range_sigma.is_finite() && self.range_sigma >= 0.0) {
            return Err(SimError::InvalidParam("range_sigma"));
        }
        if !(self.fov_h.is_finite() && self.fov_h > 0.0 && self.elev_min <= self.elev_max) {
            return Err(SimError::InvalidParam("lidar angles"));
        }
        Ok(())
    }
}

/// Bearings of `n` beams over `fov`, centred on the boresight. A full circle
/// uses `n` equal steps starting at -π so that quarter turns map the grid onto
/// itself when `n` is a multiple of four.
fn beam_angles(n: usize, fov: f64) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![0.0];
    }
    if fov >= TAU {
        let step = TAU / n as f64;
        (0..n).map(|i| -PI + step * i as f64).collect()
    } else {
        let step = fov / (n - 1) as f64;
        (0..n).map(|i| -0.5 * fov + step * i as f64).collect()
    }
}

fn elevations(p: &LidarParams) -> Vec<f64> {
    if p.rays_v == 1 {
        return alloc::vec![0.5 * (p.elev_min + p.elev_max)];
    }
    let step = (p.elev_max - p.elev_min) / (p.rays_v - 1) as f64;
    (0..p.rays_v).map(|i| p.elev_min + step * i as f64).collect()
}

/// First-hit distance of a 3-D world ray against one object.
fn object_hit_3d(shape: &Shape, height: f64, o: &Point3, d: &Point3) -> Option<f64> {
    match *shape {
        Shape::Circle { center, radius } => {
            let ox = o[0] - center.x;
            let oy = o[1] - center.y;
            let mut best: Option<f64> = None;
            let a = d[0] * d[0] + d[1] * d[1];
            if a > 0.0 {
                let b = 2.0 * (ox * d[0] + oy * d[1]);
                let c = ox * ox + oy * oy - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc >= 0.0 {
                    let sq = libm::sqrt(disc);
                    for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                        let z = o[2] + t * d[2];
                        if t > 0.0 && (0.0..=height).contains(&z) {
                            best = Some(t);
                            break;
                        }
                    }
                }
            }
            if d[2] < 0.0 {
                let t = (height - o[2]) / d[2];
                if t > 0.0 {
                    let x = ox + t * d[0];
                    let y = oy + t * d[1];
                    if x * x + y * y <= radius * radius {
                        best = Some(best.map_or(t, |b| b.min(t)));
                    }
                }
            }
            best
        }
        Shape::Box { center, extents, yaw } => {
            let local = Vec2::new(o[0] - center.x, o[1] - center.y).rotate(-yaw);
            let dl = Vec2::new(d[0], d[1]).rotate(-yaw);
            let hx = 0.5 * extents.x;
            let hy = 0.5 * extents.y;
            slab(&[local.x, local.y, o[2]], &[dl.x, dl.y, d[2]], &[-hx, -hy, 0.0], &[hx, hy, height])
                .filter(|&t| t > 0.0)
        }
    }
}

/// Samples a 3-D LiDAR sweep in the sensor frame (x forward, z up, origin at
/// the sensor). Returns first-hit points on objects and on the sea plane,
/// which sits at `z = -sensor_height`.
pub fn sample_lidar_cloud<R: Rng + ?Sized>(
    world: &World,
    vessel: &VesselState,
    params: &LidarParams,
    rng: &mut R,
) -> Result<PointCloud, SimError> {
    params.validate()?;
    let origin = [vessel.pose.x, vessel.pose.y, params.sensor_height];
    let azimuths = beam_angles(params.rays_h, params.fov_h);
    let elevs = elevations(params);
    let mut points = Vec::new();
    for &az in &azimuths {
        let world_az = vessel.pose.yaw + az;
        let (saz, caz) = (libm::sin(world_az), libm::cos(world_az));
        let (sl, cl) = (libm::sin(az), libm::cos(az));
        for &el in &elevs {
            let (se, ce) = (libm::sin(el), libm::cos(el));
            let dir = [ce * caz, ce * saz, se];
            let mut best = if se < 0.0 { Some(params.sensor_height / -se) } else { None };
            for obj in &world.objects {
                if let Some(t) = object_hit_3d(&obj.shape, obj.height, &origin, &dir) {
                    best = Some(best.map_or(t, |b: f64| b.min(t)));
                }
            }
            let Some(t) = best.filter(|&t| t <= params.max_range) else {
                continue;
            };
            let r = (t + gaussian(rng, params.range_sigma)).clamp(f64::MIN_POSITIVE, params.max_range);
            points.push([r * ce * cl, r * ce * sl, r * se]);
        }
    }
    Ok(PointCloud { frame: Frame::Sensor, points })
}

/// Planar range scan: N bearings and the nearest footprint distance on each.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RangeScan {
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl RangeScan {
    /// Minimum range within each of `sectors` equal consecutive groups of beams.
    pub fn downsample(&self, sectors: usize) -> Vec<f64> {
        let n = self.ranges.len();
        (0..sectors)
            .map(|s| {
                let lo = s * n / sectors;
                let hi = ((s + 1) * n / sectors).max(lo + 1).min(n);
                self.ranges[lo..hi].iter().copied().fold(self.max_range, f64::min)
            })
            .collect()
    }
}

/// Casts `n_beams` planar rays from the vessel position across `fov`
/// (centred on the heading) against object footprints.
pub fn sample_range_scan(
    world: &World,
    vessel: &VesselState,
    n_beams: usize,
    fov: f64,
    max_range: f64,
) -> Result<RangeScan, SimError> {
    if n_beams < 3 {
        return Err(SimError::InvalidParam("n_beams must be >= 3"));
    }
    if !(max_range.is_finite() && max_range > 0.0) {
        return Err(SimError::InvalidParam("max_range"));
    }
    if !(fov.is_finite() && fov > 0.0) {
        return Err(SimError::InvalidParam("fov"));
    }
    let origin = vessel.pose.position();
    let angles = beam_angles(n_beams, fov);
    let ranges = angles
        .iter()
        .map(|&a| {
            let dir = Vec2::from_angle(vessel.pose.yaw + a);
            world
                .objects
                .iter()
                .filter_map(|o| o.shape.ray_hit(origin, dir))
                .fold(max_range, f64::min)
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    Ok(RangeScan { angles, ranges, max_range })
}

/// Nominal footprint and height of each object kind.
pub fn stock_shape(kind: ObjectKind, center: Vec2, yaw: f64) -> (Shape, f64) {
    match kind {
        ObjectKind::ObstacleBuoy => (Shape::Circle { center, radius: 0.35 }, 0.8),
        ObjectKind::TotemBuoy => (Shape::Circle { center, radius: 0.4 }, 2.6),
        ObjectKind::Dock => (Shape::Box { center, extents: Vec2::new(6.0, 2.5), yaw }, 0.8),
        ObjectKind::DeliverBox => (Shape::Box { center, extents: Vec2::new(1.6, 1.6), yaw }, 1.8),
    }
}
