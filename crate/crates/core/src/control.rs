//! PID primitives, heading and cascade position control, thrust mixing.

use crate::geometry::{angle_diff, Pose2D, Vec2};
use crate::sim::ThrustCommand;
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("non-finite controller input")]
    NonFinite,
    #[error("dt must be positive")]
    InvalidDt,
    #[error("invalid gains: {0}")]
    InvalidGains(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Clamp on the accumulated integral term `ki * ∫e`.
    pub i_limit: f64,
    pub out_limit: f64,
}

impl PidGains {
    pub const fn new(kp: f64, ki: f64, kd: f64, i_limit: f64, out_limit: f64) -> Self {
        PidGains { kp, ki, kd, i_limit, out_limit }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let finite = [self.kp, self.ki, self.kd, self.i_limit, self.out_limit].iter().all(|v| v.is_finite());
        if !finite {
            return Err(ControlError::InvalidGains("non-finite"));
        }
        if self.kp < 0.0 || self.ki < 0.0 || self.kd < 0.0 {
            return Err(ControlError::InvalidGains("gains must be non-negative"));
        }
        if self.i_limit <= 0.0 || self.out_limit <= 0.0 {
            return Err(ControlError::InvalidGains("limits must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    /// Accumulated integral term (already multiplied by `ki`).
    pub integral: f64,
    pub prev_error: Option<f64>,
}

impl PidState {
    /// One controller update. The integral term is clamped to `±i_limit`
    /// before the output is clamped to `±out_limit`; the derivative is a
    /// first difference of the error and is zero on the first call.
    pub fn step(self, gains: &PidGains, error: f64, dt: f64) -> Result<(f64, PidState), ControlError> {
        if !error.is_finite() {
            return Err(ControlError::NonFinite);
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ControlError::InvalidDt);
        }
        let integral = (self.integral + gains.ki * error * dt).clamp(-gains.i_limit, gains.i_limit);
        let derivative = self.prev_error.map_or(0.0, |prev| (error - prev) / dt);
        let raw = gains.kp * error + integral + gains.kd * derivative;
        let out = raw.clamp(-gains.out_limit, gains.out_limit);
        Ok((out, PidState { integral, prev_error: Some(error) }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ControllerGains {
    pub heading: PidGains,
    /// Along-track distance error to speed setpoint.
    pub position: PidGains,
    /// Speed error to surge effort.
    pub speed: PidGains,
    pub v_max: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            heading: PidGains::new(1.2, 0.0, 0.3, 1.0, 1.0),
            position: PidGains::new(0.5, 0.0, 0.0, 1.0, 2.0),
            speed: PidGains::new(1.0, 0.2, 0.0, 0.5, 1.0),
            v_max: 2.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.heading.validate()?;
        self.position.validate()?;
        self.speed.validate()?;
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return Err(ControlError::InvalidGains("v_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CascadeState {
    pub outer: PidState,
    pub inner: PidState,
}

/// Turn effort in `[-1, 1]` toward `yaw_ref`, acting on the wrapped error.
pub fn heading_control(
    yaw_est: f64,
    yaw_ref: f64,
    state: PidState,
    gains: &PidGains,
    dt: f64,
) -> Result<(f64, PidState), ControlError> {
    if !(yaw_est.is_finite() && yaw_ref.is_finite()) {
        return Err(ControlError::NonFinite);
    }
    let (out, next) = state.step(gains, angle_diff(yaw_ref, yaw_est), dt)?;
    Ok((out.clamp(-1.0, 1.0), next))
}

/// Inner loop only: regulates measured speed to `speed_ref`.
pub fn speed_control(
    speed_ref: f64,
    measured_speed: f64,
    state: PidState,
    gains: &PidGains,
    dt: f64,
) -> Result<(f64, PidState), ControlError> {
    let (out, next) = state.step(gains, speed_ref - measured_speed, dt)?;
    Ok((out.clamp(-1.0, 1.0), next))
}

/// Cascade position loop. The outer PID turns the along-track distance to
/// `target` into a speed setpoint limited to `±v_max`; the inner PID turns
/// the speed error into surge effort. Returns the effort, the speed setpoint
/// and the updated state.
pub fn cascade_position_control(
    pose_est: &Pose2D,
    target: Vec2,
    measured_speed: f64,
    state: CascadeState,
    gains: &ControllerGains,
    dt: f64,
) -> Result<(f64, f64, CascadeState), ControlError> {
    if !(target.is_finite() && pose_est.is_finite() && measured_speed.is_finite()) {
        return Err(ControlError::NonFinite);
    }
    let along = (target - pose_est.position()).dot(pose_est.heading());
    let (v_sp, outer) = state.outer.step(&gains.position, along, dt)?;
    let v_sp = v_sp.clamp(-gains.v_max, gains.v_max);
    let (effort, inner) = speed_control(v_sp, measured_speed, state.inner, &gains.speed, dt)?;
    Ok((effort, v_sp, CascadeState { outer, inner }))
}

/// Differential mixing: positive turn effort speeds up the right thruster
/// and turns the vessel left (counter-clockwise).
pub fn mix_thrust(surge_effort: f64, turn_effort: f64) -> ThrustCommand {
    ThrustCommand::new(surge_effort - turn_effort, surge_effort + turn_effort)
}
