//! Pure-pursuit waypoint following, mission sequencing and station keeping.

use alloc::vec::Vec;

use crate::control::{
    cascade_position_control, heading_control, mix_thrust, speed_control, CascadeState, ControlError,
    ControllerGains, PidState,
};
use crate::geometry::{angle_diff, Pose2D, Vec2};
use crate::mission::{SimConfig, Simulation, TrajectoryLog};
use crate::sim::{SimError, ThrustCommand, World};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("invalid path: {0}")]
    InvalidPath(&'static str),
    #[error("invalid mission parameter: {0}")]
    InvalidParam(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WaypointPath {
    pub waypoints: Vec<Vec2>,
    pub arrival_radius: f64,
    pub lookahead: f64,
}

impl WaypointPath {
    pub fn new(waypoints: Vec<Vec2>, arrival_radius: f64, lookahead: f64) -> Result<Self, GuidanceError> {
        let path = WaypointPath { waypoints, arrival_radius, lookahead };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<(), GuidanceError> {
        if self.waypoints.is_empty() {
            return Err(GuidanceError::InvalidPath("at least one waypoint required"));
        }
        if !self.waypoints.iter().all(|w| w.is_finite()) {
            return Err(GuidanceError::InvalidPath("non-finite waypoint"));
        }
        if !(self.arrival_radius.is_finite() && self.arrival_radius > 0.0) {
            return Err(GuidanceError::InvalidPath("arrival_radius must be positive"));
        }
        if !(self.lookahead.is_finite() && self.lookahead > 0.0) {
            return Err(GuidanceError::InvalidPath("lookahead must be positive"));
        }
        Ok(())
    }

    /// Same path with `start` prepended, so the first leg is defined.
    pub fn from_start(&self, start: Vec2) -> WaypointPath {
        let mut waypoints = Vec::with_capacity(self.waypoints.len() + 1);
        waypoints.push(start);
        waypoints.extend_from_slice(&self.waypoints);
        WaypointPath { waypoints, ..*self }
    }
}

/// Segments examined ahead of the current progress index when projecting
/// the vessel onto the path.
const PROJECTION_WINDOW: usize = 2;

fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq == 0.0 { 0.0 } else { ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0) };
    let q = a + ab * t;
    (q, p.distance(q))
}

/// Lookahead point for pure pursuit.
///
/// Projects the vessel onto the polyline (searching forward from
/// `progress`), then walks `lookahead` metres of arc length from the
/// projection, clamping at the final waypoint. `progress` is the index of the
/// segment holding the projection and never decreases.
pub fn pure_pursuit_target(pose: &Pose2D, path: &WaypointPath, progress: usize) -> (Vec2, usize) {
    let pts = &path.waypoints;
    if pts.len() == 1 {
        return (pts[0], 0);
    }
    let n_seg = pts.len() - 1;
    let first = progress.min(n_seg - 1);
    let last = (first + PROJECTION_WINDOW).min(n_seg - 1);
    let p = pose.position();
    let mut best = (first, pts[first], f64::INFINITY);
    for i in first..=last {
        let (q, d) = closest_on_segment(p, pts[i], pts[i + 1]);
        if d < best.2 {
            best = (i, q, d);
        }
    }
    let (seg, proj, _) = best;

    let mut remaining = path.lookahead;
    let mut from = proj;
    for i in seg..n_seg {
        let to = pts[i + 1];
        let len = from.distance(to);
        if len >= remaining {
            let dir = (to - from) * (1.0 / len);
            return (from + dir * remaining, seg.max(progress));
        }
        remaining -= len;
        from = to;
    }
    (pts[n_seg], seg.max(progress))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PursuitState {
    pub heading: PidState,
    pub speed: PidState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub thrust: ThrustCommand,
    pub surge_effort: f64,
    pub turn_effort: f64,
}

/// Speed setpoint along a path: cruise speed, ramped down linearly toward
/// the final waypoint inside `slow_radius`, and zero within `arrival_radius`.
/// The ramp aims at the waypoint itself so the vessel still has way on when
/// it reaches the arrival circle.
pub fn cruise_setpoint(cruise: f64, dist_to_final: f64, arrival_radius: f64, slow_radius: f64) -> f64 {
    if dist_to_final <= arrival_radius {
        0.0
    } else if dist_to_final >= slow_radius {
        cruise
    } else {
        cruise * dist_to_final / slow_radius
    }
}

/// Steers toward `target` with the heading loop and holds `speed_ref` with
/// the speed loop.
pub fn pure_pursuit_command(
    pose_est: &Pose2D,
    speed_est: f64,
    target: Vec2,
    speed_ref: f64,
    state: PursuitState,
    gains: &ControllerGains,
    dt: f64,
) -> Result<(Command, PursuitState), ControlError> {
    if !target.is_finite() {
        return Err(ControlError::NonFinite);
    }
    let to_target = target - pose_est.position();
    let bearing = if to_target.norm() > 0.0 { to_target.angle() } else { pose_est.yaw };
    let (turn, heading) = heading_control(pose_est.yaw, bearing, state.heading, &gains.heading, dt)?;
    let (surge, speed) = speed_control(speed_ref, speed_est, state.speed, &gains.speed, dt)?;
    let cmd = Command { thrust: mix_thrust(surge, turn), surge_effort: surge, turn_effort: turn };
    Ok((cmd, PursuitState { heading, speed }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MissionParams {
    pub cruise_speed: f64,
    /// Simulated seconds before the mission is declared failed.
    pub timeout: f64,
}

impl Default for MissionParams {
    fn default() -> Self {
        MissionParams { cruise_speed: 1.5, timeout: 300.0 }
    }
}

impl MissionParams {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if !(self.cruise_speed.is_finite() && self.cruise_speed > 0.0) {
            return Err(GuidanceError::InvalidParam("cruise_speed"));
        }
        if !(self.timeout.is_finite() && self.timeout >= 0.0) {
            return Err(GuidanceError::InvalidParam("timeout"));
        }
        Ok(())
    }

    pub fn max_ticks(&self, dt: f64) -> u64 {
        libm::round(self.timeout / dt) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Outcome {
    Completed,
    /// The final waypoint was reached but some earlier one was missed.
    Incomplete,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionReport {
    pub log: TrajectoryLog,
    pub outcome: Outcome,
    /// Simulated time at which the true position first came within the
    /// arrival radius of each waypoint, after the previous one was hit.
    pub hit_times: Vec<Option<f64>>,
    pub progress_history: Vec<usize>,
    pub collisions: u64,
}

impl MissionReport {
    pub fn success(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn waypoints_hit(&self) -> usize {
        self.hit_times.iter().filter(|h| h.is_some()).count()
    }
}

/// Follows `path` from the world's start pose until the final waypoint is
/// reached or the timeout elapses.
pub fn run_mission(
    world: &World,
    start: Pose2D,
    path: &WaypointPath,
    params: &MissionParams,
    config: &SimConfig,
) -> Result<MissionReport, GuidanceError> {
    path.validate()?;
    params.validate()?;
    let mut sim = Simulation::new(world.clone(), start, *config)?;
    follow_path(&mut sim, path, params)
}

const CONFIRM_FRACTION: f64 = 0.5;

/// Pure-pursuit loop on an existing simulation; used by [`run_mission`] and
/// by the avoidance demo after planning.
pub fn follow_path(
    sim: &mut Simulation,
    path: &WaypointPath,
    params: &MissionParams,
) -> Result<MissionReport, GuidanceError> {
    let dt = sim.dt();
    let polyline = path.from_start(sim.estimate.pose.position());
    let final_wp = *path.waypoints.last().unwrap_or(&polyline.waypoints[0]);
    let slow_radius = path.arrival_radius + 2.0 * path.lookahead;
    // Arrival is declared from the estimate, so it is confirmed well inside
    // the circle the true position is scored against.
    let confirm_radius = CONFIRM_FRACTION * path.arrival_radius;
    let mut hit_times: Vec<Option<f64>> = alloc::vec![None; path.waypoints.len()];
    let mut progress = 0;
    let mut progress_history = Vec::new();
    let mut state = PursuitState::default();
    let collisions_before = sim.collisions;
    let max_ticks = params.max_ticks(dt);
    let mut outcome = Outcome::Timeout;

    for _ in 0..max_ticks {
        let est = sim.estimate.pose;
        let (target, p) = pure_pursuit_target(&est, &polyline, progress);
        progress = p;
        progress_history.push(progress);
        let on_last_leg = progress + 1 >= polyline.waypoints.len() - 1;
        let dist_final = est.position().distance(final_wp);
        let speed_ref = if on_last_leg {
            cruise_setpoint(params.cruise_speed, dist_final, confirm_radius, slow_radius)
        } else {
            params.cruise_speed
        };
        let (cmd, next) =
            pure_pursuit_command(&est, sim.measured_speed(), target, speed_ref, state, &sim.config.gains, dt)?;
        state = next;
        sim.step(cmd.thrust)?;

        let truth = sim.state.pose.position();
        // Waypoints count in order, so a closed loop back to the start is
        // not credited on the first tick.
        for (i, wp) in path.waypoints.iter().enumerate() {
            let armed = i == 0 || hit_times[i - 1].is_some();
            if armed && hit_times[i].is_none() && truth.distance(*wp) <= path.arrival_radius {
                hit_times[i] = Some(sim.time());
            }
        }
        if on_last_leg && sim.estimate.pose.position().distance(final_wp) <= confirm_radius {
            outcome = if hit_times.iter().all(|h| h.is_some()) { Outcome::Completed } else { Outcome::Incomplete };
            break;
        }
    }
    Ok(MissionReport {
        log: sim.log.clone(),
        outcome,
        hit_times,
        progress_history,
        collisions: sim.collisions - collisions_before,
    })
}

/// Distance beyond which station keeping steers toward the hold point, and
/// inside which it freezes the heading reference (hysteresis band).
const STEER_RADIUS: f64 = 3.0;
const FREEZE_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct StationReport {
    pub log: TrajectoryLog,
    /// True position error norm after every tick.
    pub errors: Vec<f64>,
}

impl StationReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_error(&self) -> f64 {
        if self.errors.is_empty() {
            return 0.0;
        }
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    /// Largest error over the final half of the run.
    pub fn final_half_max(&self) -> f64 {
        let n = self.errors.len();
        self.errors[n / 2..].iter().copied().fold(0.0, f64::max)
    }
}

/// Holds `hold_point` for `duration` simulated seconds with the cascade
/// position loop and the heading loop.
pub fn station_keep(
    world: &World,
    start: Pose2D,
    hold_point: Vec2,
    duration: f64,
    config: &SimConfig,
) -> Result<StationReport, GuidanceError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(GuidanceError::InvalidParam("duration"));
    }
    if !hold_point.is_finite() {
        return Err(GuidanceError::InvalidParam("hold_point"));
    }
    let mut sim = Simulation::new(world.clone(), start, *config)?;
    let dt = sim.dt();
    let ticks = libm::round(duration / dt) as u64;
    let mut cascade = CascadeState::default();
    let mut heading = PidState::default();
    let mut frozen_yaw: Option<f64> = None;
    let mut errors = Vec::with_capacity(ticks as usize);
    let gains = sim.config.gains;

    for _ in 0..ticks {
        let est = sim.estimate.pose;
        let offset = hold_point - est.position();
        let dist = offset.norm();
        if dist > STEER_RADIUS {
            frozen_yaw = None;
        } else if dist < FREEZE_RADIUS && frozen_yaw.is_none() {
            frozen_yaw = Some(est.yaw);
        }
        let yaw_ref = match frozen_yaw {
            Some(y) => y,
            None if dist > 0.0 => offset.angle(),
            None => est.yaw,
        };
        let (turn, h) = heading_control(est.yaw, yaw_ref, heading, &gains.heading, dt)?;
        heading = h;
        // Drive straight only once roughly facing the point.
        let facing = libm::cos(angle_diff(yaw_ref, est.yaw)).max(0.0);
        let (surge, _, c) = cascade_position_control(&est, hold_point, sim.measured_speed(), cascade, &gains, dt)?;
        cascade = c;
        let surge = if frozen_yaw.is_some() { surge } else { surge * facing };
        sim.step(mix_thrust(surge, turn))?;
        errors.push(sim.state.pose.position().distance(hold_point));
    }
    Ok(StationReport { log: sim.log, errors })
}
