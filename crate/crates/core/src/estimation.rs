//! Constant-gain position and heading fusion.
//!
//! Position and orientation are filtered independently. Each tick first
//! predicts with the motion delta, then blends toward the measurement with a
//! fixed gain (a steady-state Kalman correction).

use crate::geometry::{angle_diff, wrap_angle, Pose2D, Vec2};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("gain {0} must lie in [0, 1]")]
    InvalidGain(&'static str),
    #[error("variance {0} must be finite and non-negative")]
    InvalidVariance(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PoseEstimate {
    pub pose: Pose2D,
    /// Per-axis position variance, m².
    pub position_var: f64,
    pub yaw_var: f64,
}

impl PoseEstimate {
    pub fn new(pose: Pose2D, position_var: f64, yaw_var: f64) -> Self {
        PoseEstimate { pose, position_var, yaw_var }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FusionGains {
    pub position: f64,
    pub heading: f64,
    /// Variance added per predict step.
    pub position_process_var: f64,
    pub yaw_process_var: f64,
    /// Assumed measurement variances, used only for the reported variance.
    pub gps_var: f64,
    pub compass_var: f64,
}

impl Default for FusionGains {
    fn default() -> Self {
        FusionGains {
            position: 0.3,
            heading: 0.5,
            position_process_var: 1e-4,
            yaw_process_var: 1e-5,
            gps_var: 1.0,
            compass_var: 1e-3,
        }
    }
}

impl FusionGains {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if !(0.0..=1.0).contains(&self.position) {
            return Err(EstimationError::InvalidGain("position"));
        }
        if !(0.0..=1.0).contains(&self.heading) {
            return Err(EstimationError::InvalidGain("heading"));
        }
        let vars = [
            (self.position_process_var, "position_process_var"),
            (self.yaw_process_var, "yaw_process_var"),
            (self.gps_var, "gps_var"),
            (self.compass_var, "compass_var"),
        ];
        for (v, name) in vars {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EstimationError::InvalidVariance(name));
            }
        }
        Ok(())
    }
}

/// Predicts with `motion_delta` (world frame) and corrects toward `gps`.
/// A non-finite GPS reading skips the correction.
pub fn fuse_position(prev: &PoseEstimate, gps: Vec2, motion_delta: Vec2, gains: &FusionGains) -> PoseEstimate {
    let g = gains.position;
    let predicted = prev.pose.position() + motion_delta;
    let predicted_var = prev.position_var + gains.position_process_var;
    let mut out = *prev;
    if gps.is_finite() {
        let p = predicted + (gps - predicted) * g;
        out.pose.x = p.x;
        out.pose.y = p.y;
        out.position_var = (1.0 - g) * (1.0 - g) * predicted_var + g * g * gains.gps_var;
    } else {
        out.pose.x = predicted.x;
        out.pose.y = predicted.y;
        out.position_var = predicted_var;
    }
    out
}

/// Same predict/correct scheme on the circle: the correction acts on the
/// minimal signed angular error, so blends never take the long way round.
pub fn fuse_heading(prev: &PoseEstimate, compass_yaw: f64, gyro_delta: f64, gains: &FusionGains) -> PoseEstimate {
    let g = gains.heading;
    let predicted = wrap_angle(prev.pose.yaw + gyro_delta);
    let predicted_var = prev.yaw_var + gains.yaw_process_var;
    let mut out = *prev;
    if compass_yaw.is_finite() {
        out.pose.yaw = wrap_angle(predicted + g * angle_diff(compass_yaw, predicted));
        out.yaw_var = (1.0 - g) * (1.0 - g) * predicted_var + g * g * gains.compass_var;
    } else {
        out.pose.yaw = predicted;
        out.yaw_var = predicted_var;
    }
    out
}
