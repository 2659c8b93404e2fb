//! Deterministic discrete-time marine world: vessel dynamics, static objects
//! and simulated sensors.

mod sensors;
mod world;

pub use sensors::{
    sample_lidar_cloud, sample_range_scan, stock_shape, Compass, Gps, LidarParams, Odometry, RangeScan, SensorNoise,
    SensorSuite,
};
pub use world::{check_collision, ObjectKind, Shape, World, WorldObject};

use crate::geometry::{wrap_angle, Pose2D};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct VesselState {
    pub pose: Pose2D,
    /// Body-frame forward velocity, m/s.
    pub surge: f64,
    /// rad/s, positive counter-clockwise.
    pub yaw_rate: f64,
}

impl VesselState {
    pub fn at_rest(pose: Pose2D) -> Self {
        VesselState { pose, surge: 0.0, yaw_rate: 0.0 }
    }
}

/// Normalized left/right thrust, each clamped to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ThrustCommand {
    pub left: f64,
    pub right: f64,
}

impl ThrustCommand {
    pub const ZERO: ThrustCommand = ThrustCommand { left: 0.0, right: 0.0 };

    /// Clamps both components. NaN passes through and is rejected by [`step_dynamics`].
    pub fn new(left: f64, right: f64) -> Self {
        ThrustCommand { left: left.clamp(-1.0, 1.0), right: right.clamp(-1.0, 1.0) }
    }
}

/// First-order-lag differential-drive model.
///
/// `surge' = (thrust_gain * (l + r) / 2 - surge_drag * surge) / mass`
/// `yaw_rate' = (turn_gain * (r - l) - yaw_drag * yaw_rate) / yaw_inertia`
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DynamicsParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub thrust_gain: f64,
    pub turn_gain: f64,
    pub surge_drag: f64,
    pub yaw_drag: f64,
    pub surge_max: f64,
    pub yaw_rate_max: f64,
    /// Radius of the vessel's collision disc, m.
    pub vessel_radius: f64,
    pub dt: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            mass: 1.0,
            yaw_inertia: 1.0,
            thrust_gain: 2.0,
            turn_gain: 0.25,
            surge_drag: 1.0,
            yaw_drag: 1.0,
            surge_max: 2.0,
            yaw_rate_max: 0.5,
            vessel_radius: 1.0,
            dt: 0.1,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            (self.mass, "mass"),
            (self.yaw_inertia, "yaw_inertia"),
            (self.surge_drag, "surge_drag"),
            (self.yaw_drag, "yaw_drag"),
            (self.surge_max, "surge_max"),
            (self.yaw_rate_max, "yaw_rate_max"),
            (self.vessel_radius, "vessel_radius"),
            (self.dt, "dt"),
        ];
        for (v, name) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidParam(name));
            }
        }
        if !(self.thrust_gain.is_finite() && self.turn_gain.is_finite()) {
            return Err(SimError::InvalidParam("gains"));
        }
        Ok(())
    }

    /// Surge speed reached under a constant symmetric thrust `u` (before clamping).
    pub fn steady_surge(&self, u: f64) -> f64 {
        self.thrust_gain * u / self.surge_drag
    }
}

/// Advances the vessel one tick.
///
/// Velocities are updated first with the drag term taken implicitly, so a
/// zero-thrust tick can only shrink them; the pose is then integrated with
/// the new velocities using the midpoint heading.
pub fn step_dynamics(
    state: &VesselState,
    cmd: ThrustCommand,
    dt: f64,
    params: &DynamicsParams,
) -> Result<VesselState, SimError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::InvalidParam("dt"));
    }
    if !(cmd.left.is_finite() && cmd.right.is_finite()) {
        return Err(SimError::NonFinite("thrust command"));
    }
    if !(state.pose.is_finite() && state.surge.is_finite() && state.yaw_rate.is_finite()) {
        return Err(SimError::NonFinite("vessel state"));
    }
    let cmd = ThrustCommand::new(cmd.left, cmd.right);
    let p = params;

    let surge_force = p.thrust_gain * 0.5 * (cmd.left + cmd.right);
    let surge = (state.surge + dt * surge_force / p.mass) / (1.0 + dt * p.surge_drag / p.mass);
    let surge = surge.clamp(-p.surge_max, p.surge_max);

    let moment = p.turn_gain * (cmd.right - cmd.left);
    let yaw_rate = (state.yaw_rate + dt * moment / p.yaw_inertia) / (1.0 + dt * p.yaw_drag / p.yaw_inertia);
    let yaw_rate = yaw_rate.clamp(-p.yaw_rate_max, p.yaw_rate_max);

    let mid_yaw = state.pose.yaw + 0.5 * yaw_rate * dt;
    let pose = Pose2D {
        x: state.pose.x + surge * libm::cos(mid_yaw) * dt,
        y: state.pose.y + surge * libm::sin(mid_yaw) * dt,
        yaw: wrap_angle(state.pose.yaw + yaw_rate * dt),
    };
    Ok(VesselState { pose, surge, yaw_rate })
}
