//! The closed-loop harness shared by every behavior: it owns the world, the
//! true vessel state, the sensors and the pose estimate, and logs each tick.

use alloc::vec::Vec;

use crate::control::ControllerGains;
use crate::estimation::{fuse_heading, fuse_position, FusionGains, PoseEstimate};
use crate::geometry::Pose2D;
use crate::sim::{
    check_collision, step_dynamics, DynamicsParams, Odometry, SensorNoise, SensorSuite, SimError, ThrustCommand,
    VesselState, World,
};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// One logged tick. Field order is the trajectory CSV column order.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_yaw: f64,
    pub surge: f64,
    pub yaw_rate: f64,
    pub thrust_l: f64,
    pub thrust_r: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }
}

/// Everything tunable about a closed-loop run besides the world and task.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    pub dynamics: DynamicsParams,
    pub noise: SensorNoise,
    pub fusion: FusionGains,
    pub gains: ControllerGains,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.dynamics.validate()?;
        self.noise.validate()?;
        self.fusion.validate().map_err(|_| SimError::InvalidParam("fusion gains"))?;
        self.gains.validate().map_err(|_| SimError::InvalidParam("controller gains"))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: World,
    pub config: SimConfig,
    pub state: VesselState,
    pub estimate: PoseEstimate,
    pub sensors: SensorSuite,
    pub tick: u64,
    pub collisions: u64,
    pub log: TrajectoryLog,
}

impl Simulation {
    /// Starts at rest with the estimate initialised to the known start pose.
    pub fn new(world: World, start: Pose2D, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        if !start.is_finite() {
            return Err(SimError::NonFinite("start pose"));
        }
        let start = Pose2D::new(start.x, start.y, start.yaw);
        Ok(Simulation {
            world,
            sensors: SensorSuite::new(&config.noise),
            estimate: PoseEstimate::new(start, config.fusion.gps_var, config.fusion.compass_var),
            state: VesselState::at_rest(start),
            config,
            tick: 0,
            collisions: 0,
            log: TrajectoryLog::default(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.config.dynamics.dt
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt()
    }

    /// Measured surge speed available to the controllers.
    pub fn measured_speed(&self) -> f64 {
        self.state.surge
    }

    pub fn in_collision(&self) -> bool {
        check_collision(&self.world, &self.state, self.config.dynamics.vessel_radius)
    }

    /// Actuates one tick: integrates the dynamics, fuses the new sensor
    /// readings into the estimate and appends a log row. Returns whether the
    /// vessel is in contact with an object afterwards.
    pub fn step(&mut self, cmd: ThrustCommand) -> Result<bool, SimError> {
        let prev = self.state;
        self.state = step_dynamics(&prev, cmd, self.config.dynamics.dt, &self.config.dynamics)?;
        self.tick += 1;

        let odo = Odometry::between(&prev.pose, &self.state.pose);
        let gps = self.sensors.gps.read(&self.state);
        let compass = self.sensors.compass.read(&self.state);
        let fusion = &self.config.fusion;
        let delta = odo.delta_at(self.estimate.pose.yaw);
        let est = fuse_position(&self.estimate, gps, delta, fusion);
        self.estimate = fuse_heading(&est, compass, odo.dyaw, fusion);

        let hit = self.in_collision();
        if hit {
            self.collisions += 1;
        }
        let cmd = ThrustCommand::new(cmd.left, cmd.right);
        let (s, e) = (&self.state, &self.estimate.pose);
        self.log.rows.push(LogRow {
            t: self.time(),
            x: s.pose.x,
            y: s.pose.y,
            yaw: s.pose.yaw,
            est_x: e.x,
            est_y: e.y,
            est_yaw: e.yaw,
            surge: s.surge,
            yaw_rate: s.yaw_rate,
            thrust_l: cmd.left,
            thrust_r: cmd.right,
        });
        Ok(hit)
    }
}
