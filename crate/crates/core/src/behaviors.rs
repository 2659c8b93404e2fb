//! Totem circling with two PID loops on `(d, phi)`, and the three-action
//! docking approach policy.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, TAU};

use crate::action::{ActionThrusts, DiscreteAction};
use crate::control::{mix_thrust, speed_control, ControlError, PidGains, PidState};
use crate::geometry::{angle_diff, wrap_angle, Pose2D, Vec2};
use crate::mission::{SimConfig, Simulation, TrajectoryLog};
use crate::sim::{SimError, ThrustCommand, World};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub type DockAction = DiscreteAction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("vessel is at the totem centre; the tangent direction is undefined")]
    AtCenter,
    #[error("invalid behavior parameter: {0}")]
    InvalidParam(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CircleDirection {
    Clockwise,
    #[default]
    Counterclockwise,
}

impl CircleDirection {
    /// +1 for counter-clockwise, -1 for clockwise.
    pub fn sign(self) -> f64 {
        match self {
            CircleDirection::Counterclockwise => 1.0,
            CircleDirection::Clockwise => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirclingState {
    /// Distance from the vessel to the totem centre, m.
    pub d: f64,
    /// Heading minus the tangent direction of the commanded circle, wrapped.
    pub phi: f64,
    pub radius: f64,
    pub direction: CircleDirection,
}

const CENTER_EPS: f64 = 1e-9;

pub fn circling_state(
    pose: &Pose2D,
    totem: Vec2,
    radius: f64,
    direction: CircleDirection,
) -> Result<CirclingState, BehaviorError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(BehaviorError::InvalidParam("radius"));
    }
    let rel = pose.position() - totem;
    let d = rel.norm();
    if d < CENTER_EPS {
        return Err(BehaviorError::AtCenter);
    }
    let tangent = rel.angle() + direction.sign() * FRAC_PI_2;
    Ok(CirclingState { d, phi: angle_diff(pose.yaw, tangent), radius, direction })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CirclingGains {
    pub phi: PidGains,
    pub d: PidGains,
    pub cruise_speed: f64,
}

impl Default for CirclingGains {
    fn default() -> Self {
        CirclingGains {
            phi: PidGains::new(1.0, 0.0, 0.2, 1.0, 1.0),
            d: PidGains::new(0.3, 0.05, 0.0, 0.6, 1.0),
            cruise_speed: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CirclingPidState {
    pub phi: PidState,
    pub d: PidState,
    pub speed: PidState,
}

/// Sums the phi loop and the radial loop into one turn effort. Being outside
/// the circle turns the vessel toward the centre.
pub fn circling_command(
    cstate: &CirclingState,
    measured_speed: f64,
    state: CirclingPidState,
    gains: &CirclingGains,
    speed_gains: &PidGains,
    dt: f64,
) -> Result<(ThrustCommand, f64, CirclingPidState), BehaviorError> {
    let (phi_out, phi) = state.phi.step(&gains.phi, -cstate.phi, dt)?;
    let (d_out, d) = state.d.step(&gains.d, cstate.d - cstate.radius, dt)?;
    let turn = (phi_out + cstate.direction.sign() * d_out).clamp(-1.0, 1.0);
    let (surge, speed) = speed_control(gains.cruise_speed, measured_speed, state.speed, speed_gains, dt)?;
    Ok((mix_thrust(surge, turn), turn, CirclingPidState { phi, d, speed }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CirclingReport {
    pub log: TrajectoryLog,
    /// `(d, phi)` after every tick.
    pub samples: Vec<(f64, f64)>,
    /// Laps completed after every tick.
    pub laps: Vec<f64>,
    pub radius: f64,
}

impl CirclingReport {
    pub fn laps_completed(&self) -> f64 {
        self.laps.last().copied().unwrap_or(0.0)
    }

    /// First lap count after which `|d - R| <= band` holds for the rest of
    /// the run, or `None` if the run ends outside the band.
    pub fn converged_at_lap(&self, band: f64) -> Option<f64> {
        let mut last_out = None;
        for (i, &(d, _)) in self.samples.iter().enumerate() {
            if (d - self.radius).abs() > band {
                last_out = Some(i);
            }
        }
        match last_out {
            None => Some(0.0),
            Some(i) if i + 1 < self.samples.len() => Some(self.laps[i]),
            Some(_) => None,
        }
    }

    /// Mean signed phi over the final full lap.
    pub fn final_lap_mean_phi(&self) -> f64 {
        let total = self.laps_completed();
        let from = total - 1.0;
        let vals: Vec<f64> =
            self.samples.iter().zip(&self.laps).filter(|(_, &l)| l >= from).map(|(&(_, phi), _)| phi).collect();
        if vals.is_empty() {
            return 0.0;
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CirclingTask {
    pub totem: Vec2,
    pub radius: f64,
    pub direction: CircleDirection,
    pub laps: f64,
    /// Simulated seconds.
    pub timeout: f64,
}

/// Circles `task.totem` until the requested laps are done or the timeout
/// elapses.
pub fn run_circling(
    world: &World,
    start: Pose2D,
    task: &CirclingTask,
    gains: &CirclingGains,
    config: &SimConfig,
) -> Result<CirclingReport, BehaviorError> {
    let CirclingTask { totem, radius, direction, laps, timeout } = *task;
    if !(laps.is_finite() && laps > 0.0 && timeout.is_finite() && timeout >= 0.0) {
        return Err(BehaviorError::InvalidParam("laps/timeout"));
    }
    let mut sim = Simulation::new(world.clone(), start, *config)?;
    let dt = sim.dt();
    let speed_gains = sim.config.gains.speed;
    let mut pid = CirclingPidState::default();
    let mut angle = (start.position() - totem).angle();
    let mut swept = 0.0;
    let mut samples = Vec::new();
    let mut lap_log = Vec::new();
    let ticks = libm::round(timeout / dt) as u64;
    for _ in 0..ticks {
        let cs = circling_state(&sim.estimate.pose, totem, radius, direction)?;
        let (cmd, _, next) = circling_command(&cs, sim.measured_speed(), pid, gains, &speed_gains, dt)?;
        pid = next;
        sim.step(cmd)?;
        let truth = circling_state(&sim.state.pose, totem, radius, direction)?;
        let a = (sim.state.pose.position() - totem).angle();
        swept += direction.sign() * angle_diff(a, angle);
        angle = a;
        samples.push((truth.d, truth.phi));
        lap_log.push(swept.max(0.0) / TAU);
        if swept / TAU >= laps {
            break;
        }
    }
    Ok(CirclingReport { log: sim.log, samples, laps: lap_log, radius })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DockParams {
    /// Bearing errors within this band map to go_straight, rad.
    pub dead_band: f64,
    /// Distance ahead of the vessel's projection on the approach axis at
    /// which the policy aims, m.
    pub aim_ahead: f64,
}

impl Default for DockParams {
    fn default() -> Self {
        DockParams { dead_band: 10.0_f64.to_radians(), aim_ahead: 4.0 }
    }
}

/// Bearing error from the vessel heading to the aim point on the dock's
/// approach axis. `dock` is the bay mouth with yaw pointing into the bay.
pub fn dock_bearing_error(vessel: &Pose2D, dock: &Pose2D, params: &DockParams) -> f64 {
    let axis = Vec2::from_angle(dock.yaw);
    let along = (vessel.position() - dock.position()).dot(axis);
    let aim = dock.position() + axis * (along + params.aim_ahead);
    angle_diff((aim - vessel.position()).angle(), wrap_angle(vessel.yaw))
}

pub fn dock_policy(vessel: &Pose2D, dock: &Pose2D, params: &DockParams) -> DockAction {
    let err = dock_bearing_error(vessel, dock, params);
    if err.abs() < params.dead_band {
        DiscreteAction::GoStraight
    } else if err > 0.0 {
        DiscreteAction::TurnLeft
    } else {
        DiscreteAction::TurnRight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DockReport {
    pub log: TrajectoryLog,
    pub actions: Vec<DockAction>,
    /// Lateral offset from the approach axis when the vessel crossed the
    /// bay mouth, if it did.
    pub mouth_lateral_error: Option<f64>,
}

pub fn run_docking(
    world: &World,
    start: Pose2D,
    dock: Pose2D,
    params: &DockParams,
    thrusts: &ActionThrusts,
    timeout: f64,
    config: &SimConfig,
) -> Result<DockReport, BehaviorError> {
    let mut sim = Simulation::new(world.clone(), start, *config)?;
    let axis = Vec2::from_angle(dock.yaw);
    let ticks = libm::round(timeout / sim.dt()) as u64;
    let mut actions = Vec::new();
    let mut mouth_lateral_error = None;
    let mut prev_along = (start.position() - dock.position()).dot(axis);
    for _ in 0..ticks {
        let action = dock_policy(&sim.estimate.pose, &dock, params);
        actions.push(action);
        sim.step(thrusts.command(action))?;
        let rel = sim.state.pose.position() - dock.position();
        let along = rel.dot(axis);
        if prev_along < 0.0 && along >= 0.0 {
            mouth_lateral_error = Some(rel.cross(axis).abs());
            break;
        }
        prev_along = along;
    }
    Ok(DockReport { log: sim.log, actions, mouth_lateral_error })
}
