//! Sense-plan-act obstacle avoidance toward a goal: LiDAR scans are segmented
//! into tracks, alerted tracks feed the minimum-angle planner, and pure
//! pursuit follows the plan until the next replanning instant.

use alloc::vec::Vec;

use crate::geometry::{Pose2D, Vec2};
use crate::guidance::{follow_path, GuidanceError, MissionParams, Outcome, WaypointPath};
use crate::mission::{SimConfig, Simulation, TrajectoryLog};
use crate::perception::{extract_objects, PerceptionError, PipelineParams};
use crate::planning::{
    plan_min_angle, raise_alerts, ObstacleTrack, ObstacleTracker, PlanError, PlannedPath, PlannerParams,
    TrackerParams,
};
use crate::sim::{sample_lidar_cloud, LidarParams, SimError, World};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AvoidError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AvoidParams {
    pub lidar: LidarParams,
    pub pipeline: PipelineParams,
    pub tracker: TrackerParams,
    pub planner: PlannerParams,
    /// Tracks closer than this are planned around, m.
    pub alert_range: f64,
    /// Simulated seconds between scans.
    pub replan_period: f64,
    pub lookahead: f64,
    pub arrival_radius: f64,
    pub mission: MissionParams,
}

impl Default for AvoidParams {
    fn default() -> Self {
        AvoidParams {
            lidar: LidarParams { rays_h: 360, rays_v: 16, ..LidarParams::default() },
            pipeline: PipelineParams::default(),
            // Margin covers the vessel radius plus half a metre.
            tracker: TrackerParams { margin: 1.5, ..TrackerParams::default() },
            planner: PlannerParams::default(),
            alert_range: 15.0,
            replan_period: 2.0,
            lookahead: 5.0,
            arrival_radius: 1.5,
            mission: MissionParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvoidReport {
    pub log: TrajectoryLog,
    pub reached: bool,
    pub collisions: u64,
    /// Every plan, in order.
    pub plans: Vec<PlannedPath>,
    /// Tracks alive at the end of the run.
    pub tracks: Vec<ObstacleTrack>,
    pub alerts: usize,
}

pub fn run_avoidance(
    world: &World,
    start: Pose2D,
    goal: Vec2,
    params: &AvoidParams,
    config: &SimConfig,
) -> Result<AvoidReport, AvoidError> {
    params.mission.validate()?;
    if !(params.replan_period.is_finite() && params.replan_period > 0.0) {
        return Err(GuidanceError::InvalidParam("replan_period").into());
    }
    let mut sim = Simulation::new(world.clone(), start, *config)?;
    let mut tracker = ObstacleTracker::new();
    let mut plans = Vec::new();
    let mut alerts = 0;
    let mut reached = false;
    let deadline = params.mission.timeout;

    while sim.time() < deadline - 0.5 * sim.dt() {
        let scan = sample_lidar_cloud(&sim.world, &sim.state, &params.lidar, &mut sim.sensors.lidar_rng)?;
        let est = sim.estimate.pose;
        let clusters: Vec<Vec<Vec2>> = extract_objects(&scan, &params.pipeline)?
            .iter()
            .map(|c| c.points.iter().map(|p| est.to_world(Vec2::new(p[0], p[1]))).collect())
            .collect();
        tracker.update(&clusters, sim.tick, &params.tracker);
        let raised = raise_alerts(&mut tracker.tracks, &est, params.alert_range);
        alerts += raised.len();
        let near: Vec<ObstacleTrack> = tracker.tracks.iter().filter(|t| t.alert_active).cloned().collect();
        let plan = plan_min_angle(est.position(), goal, &near, &params.planner)?;

        let path = WaypointPath::new(plan.vertices[1..].to_vec(), params.arrival_radius, params.lookahead)?;
        plans.push(plan);
        let chunk = MissionParams { timeout: params.replan_period.min(deadline - sim.time()), ..params.mission };
        let report = follow_path(&mut sim, &path, &chunk)?;
        if report.outcome != Outcome::Timeout {
            reached = true;
            break;
        }
    }
    Ok(AvoidReport { log: sim.log, reached, collisions: sim.collisions, plans, tracks: tracker.tracks, alerts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{stock_shape, ObjectKind, WorldObject};

    fn buoy_line() -> World {
        let objects = [(12.0, 0.3), (22.0, -0.5)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let (shape, height) = stock_shape(ObjectKind::ObstacleBuoy, Vec2::new(x, y), 0.0);
                WorldObject { id: i as u32, kind: ObjectKind::ObstacleBuoy, shape, height }
            })
            .collect();
        World::new(objects).unwrap()
    }

    #[test]
    fn clear_water_goes_straight() {
        let r = run_avoidance(&World::empty(), Pose2D::default(), Vec2::new(20.0, 0.0), &AvoidParams::default(), &SimConfig::default())
            .unwrap();
        assert!(r.reached);
        assert_eq!(r.plans[0].vertices.len(), 2);
        assert_eq!(r.alerts, 0);
    }

    #[test]
    fn detours_around_buoys_in_the_way() {
        let r = run_avoidance(&buoy_line(), Pose2D::default(), Vec2::new(35.0, 0.0), &AvoidParams::default(), &SimConfig::default())
            .unwrap();
        assert!(r.reached);
        assert_eq!(r.collisions, 0);
        assert!(r.alerts > 0);
        assert!(r.plans.iter().any(|p| p.vertices.len() > 2));
    }
}
