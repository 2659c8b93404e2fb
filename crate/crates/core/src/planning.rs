//! Obstacle tracking with proximity alerts, and the minimum-angle real-time
//! path planner.
//!
//! The planner repeatedly checks the straight segment from the current start
//! to the goal. When an obstacle blocks it, one detour candidate is built on
//! each side of the obstacle, the one needing the smaller heading change is
//! taken as the new start, and the check repeats until the segment is clear.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::geometry::{
    angle_diff, centroid, convex_hull, orient, point_in_convex, point_polygon_distance, segments_intersect, Pose2D,
    Vec2,
};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("start point lies inside obstacle {0}")]
    StartBlocked(u32),
    #[error("goal point lies inside obstacle {0}")]
    GoalBlocked(u32),
    #[error("no collision-free detour around obstacle {0}")]
    NoCandidate(u32),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("invalid planner input: {0}")]
    InvalidInput(&'static str),
}

/// A tracked obstacle with an inflated convex footprint (CCW, ≥ 3 vertices).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ObstacleTrack {
    pub id: u32,
    pub footprint: Vec<Vec2>,
    pub last_seen_tick: u64,
    pub alert_active: bool,
}

impl ObstacleTrack {
    pub fn center(&self) -> Vec2 {
        centroid(&self.footprint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrackerParams {
    /// Maximum centroid distance for matching a cluster to a track, m.
    pub gate: f64,
    /// Safety margin added around each cluster hull, m.
    pub margin: f64,
    /// Ticks a track may go unseen before it is dropped.
    pub ttl: u64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams { gate: 2.0, margin: 0.5, ttl: 50 }
    }
}

/// Convex hull of `points` grown by `margin` in every direction. Each hull
/// vertex is replaced by a small polygon circumscribing a disc of radius
/// `margin`, so the result contains the exact Minkowski sum.
pub fn inflate_hull(points: &[Vec2], margin: f64) -> Vec<Vec2> {
    const SIDES: usize = 8;
    let base = convex_hull(points);
    if margin <= 0.0 {
        return base;
    }
    let r = margin / libm::cos(core::f64::consts::PI / SIDES as f64);
    let mut grown = Vec::with_capacity(base.len() * SIDES);
    for v in &base {
        for k in 0..SIDES {
            grown.push(*v + Vec2::from_angle(TAU * k as f64 / SIDES as f64) * r);
        }
    }
    convex_hull(&grown)
}

/// Owns the track list and hands out track ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObstacleTracker {
    pub tracks: Vec<ObstacleTrack>,
    next_id: u32,
}

impl ObstacleTracker {
    pub fn new() -> Self {
        ObstacleTracker::default()
    }

    /// Matches each world-frame cluster to the nearest unmatched track within
    /// the gate, or spawns a new track. Matched footprints are replaced by the
    /// inflated hull of the cluster; tracks unseen for more than `ttl` ticks
    /// are dropped.
    pub fn update(&mut self, clusters: &[Vec<Vec2>], tick: u64, params: &TrackerParams) {
        let mut matched = alloc::vec![false; self.tracks.len()];
        for cluster in clusters {
            let footprint = inflate_hull(cluster, params.margin);
            if footprint.len() < 3 {
                continue;
            }
            let c = centroid(cluster);
            let nearest = self
                .tracks
                .iter()
                .enumerate()
                .filter(|(i, _)| !matched[*i])
                .map(|(i, t)| (i, t.center().distance(c)))
                .filter(|&(_, d)| d <= params.gate)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match nearest {
                Some((i, _)) => {
                    matched[i] = true;
                    self.tracks[i].footprint = footprint;
                    self.tracks[i].last_seen_tick = tick;
                }
                None => {
                    self.tracks.push(ObstacleTrack {
                        id: self.next_id,
                        footprint,
                        last_seen_tick: tick,
                        alert_active: false,
                    });
                    matched.push(true);
                    self.next_id += 1;
                }
            }
        }
        self.tracks.retain(|t| tick.saturating_sub(t.last_seen_tick) <= params.ttl);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ObstacleAlert {
    pub track_id: u32,
    /// Distance from the vessel position to the closest footprint point, m.
    pub distance: f64,
}

/// Emits one alert per track whose footprint lies within `alert_range` of
/// the vessel, and updates each track's `alert_active` flag.
pub fn raise_alerts(tracks: &mut [ObstacleTrack], vessel: &Pose2D, alert_range: f64) -> Vec<ObstacleAlert> {
    let p = vessel.position();
    let mut alerts = Vec::new();
    for t in tracks.iter_mut() {
        let distance = point_polygon_distance(p, &t.footprint);
        t.alert_active = distance <= alert_range;
        if t.alert_active {
            alerts.push(ObstacleAlert { track_id: t.id, distance });
        }
    }
    alerts
}

/// Closed segment versus convex polygon test: touching an edge or vertex,
/// or lying entirely inside, counts as a collision.
pub fn segment_collides(p0: Vec2, p1: Vec2, footprint: &[Vec2]) -> bool {
    let n = footprint.len();
    if n == 0 {
        return false;
    }
    if n == 1 {
        return segments_intersect(p0, p1, footprint[0], footprint[0]);
    }
    if n >= 3 && (point_in_convex(p0, footprint) || point_in_convex(p1, footprint)) {
        return true;
    }
    (0..n).any(|i| segments_intersect(p0, p1, footprint[i], footprint[(i + 1) % n]))
}

/// Parameter along `p0 -> p1` where the segment first meets the polygon.
fn entry_parameter(p0: Vec2, p1: Vec2, poly: &[Vec2]) -> f64 {
    if point_in_convex(p0, poly) {
        return 0.0;
    }
    let d = p1 - p0;
    let mut best = f64::INFINITY;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let e = b - a;
        let denom = d.cross(e);
        if denom == 0.0 {
            // Parallel edge: only collinear overlap can touch.
            if orient(a, b, p0) == 0.0 {
                let len_sq = d.norm_sq().max(f64::MIN_POSITIVE);
                for q in [a, b] {
                    let t = (q - p0).dot(d) / len_sq;
                    if (0.0..=1.0).contains(&t) {
                        best = best.min(t);
                    }
                }
            }
            continue;
        }
        let t = (a - p0).cross(e) / denom;
        let u = (a - p0).cross(d) / denom;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            best = best.min(t);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PlannedPath {
    pub vertices: Vec<Vec2>,
}

impl PlannedPath {
    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PlannerParams {
    /// Offset of detour points beyond the footprint, m.
    pub clearance: f64,
    pub max_iterations: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        // vessel radius 1 m + 0.5 m
        PlannerParams { clearance: 1.5, max_iterations: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub side: Side,
    pub point: Vec2,
    /// Absolute heading change at the candidate, rad.
    pub turn: f64,
}

const TURN_TIE: f64 = 1e-9;

/// Heading change at `via` when travelling `from -> via -> goal`.
pub fn turn_angle(from: Vec2, via: Vec2, goal: Vec2) -> f64 {
    angle_diff((goal - via).angle(), (via - from).angle()).abs()
}

/// Left and right detour points around the vertex set `group` as seen from
/// `start`, measured against the reference direction `start -> goal`.
///
/// On each side the angularly extreme vertex is pushed outward by
/// `clearance`, perpendicular to the sight line, so the leg from `start` to
/// the candidate passes outside the group's hull. Returns `None` for a side
/// when `start` is inside the hull of the group.
pub fn detour_candidates(start: Vec2, goal: Vec2, group: &[Vec2], clearance: f64) -> [Option<Candidate>; 2] {
    let hull = convex_hull(group);
    if hull.len() >= 3 && point_in_convex(start, &hull) {
        return [None, None];
    }
    let reference = (goal - start).angle();
    let mut left: Option<(f64, Vec2)> = None;
    let mut right: Option<(f64, Vec2)> = None;
    for &v in &hull {
        let rel = v - start;
        if rel.norm() == 0.0 {
            return [None, None];
        }
        let a = angle_diff(rel.angle(), reference);
        if left.is_none_or(|(la, _)| a > la) {
            left = Some((a, v));
        }
        if right.is_none_or(|(ra, _)| a < ra) {
            right = Some((a, v));
        }
    }
    let build = |side: Side, extreme: Option<(f64, Vec2)>| {
        let (_, v) = extreme?;
        let sight = (v - start).normalized()?;
        let normal = match side {
            Side::Left => sight.perp(),
            Side::Right => -sight.perp(),
        };
        let point = v + normal * clearance;
        Some(Candidate { side, point, turn: turn_angle(start, point, goal) })
    };
    [build(Side::Left, left), build(Side::Right, right)]
}

fn first_blocker(p0: Vec2, p1: Vec2, footprints: &[(u32, &[Vec2])]) -> Option<usize> {
    footprints
        .iter()
        .enumerate()
        .filter(|(_, (_, f))| segment_collides(p0, p1, f))
        .map(|(i, (_, f))| (i, entry_parameter(p0, p1, f)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

fn inside_any(p: Vec2, footprints: &[(u32, &[Vec2])]) -> Option<usize> {
    footprints.iter().position(|(_, f)| point_in_convex(p, f))
}

/// Minimum-angle planner over tracked footprints.
pub fn plan_min_angle(
    start: Vec2,
    goal: Vec2,
    tracks: &[ObstacleTrack],
    params: &PlannerParams,
) -> Result<PlannedPath, PlanError> {
    let footprints: Vec<(u32, &[Vec2])> = tracks.iter().map(|t| (t.id, t.footprint.as_slice())).collect();
    plan_over(start, goal, &footprints, params)
}

fn plan_over(
    start: Vec2,
    goal: Vec2,
    footprints: &[(u32, &[Vec2])],
    params: &PlannerParams,
) -> Result<PlannedPath, PlanError> {
    if !(start.is_finite() && goal.is_finite()) {
        return Err(PlanError::InvalidInput("non-finite start or goal"));
    }
    if !(params.clearance.is_finite() && params.clearance > 0.0) {
        return Err(PlanError::InvalidInput("clearance must be positive"));
    }
    if let Some(i) = inside_any(start, footprints) {
        return Err(PlanError::StartBlocked(footprints[i].0));
    }
    if let Some(i) = inside_any(goal, footprints) {
        return Err(PlanError::GoalBlocked(footprints[i].0));
    }

    let mut vertices = alloc::vec![start];
    let mut current = start;
    for _ in 0..params.max_iterations {
        let Some(blocker) = first_blocker(current, goal, footprints) else {
            if current != goal {
                vertices.push(goal);
            }
            return Ok(PlannedPath { vertices });
        };

        // Grow the blocking group until one side yields a clear leg.
        let mut group: Vec<usize> = alloc::vec![blocker];
        let next = loop {
            let pts: Vec<Vec2> = group.iter().flat_map(|&i| footprints[i].1.iter().copied()).collect();
            let mut cands: Vec<Candidate> =
                detour_candidates(current, goal, &pts, params.clearance).into_iter().flatten().collect();
            // Smaller turn first; ties within rounding go left.
            cands.sort_by(|a, b| {
                if (a.turn - b.turn).abs() <= TURN_TIE {
                    (a.side == Side::Right).cmp(&(b.side == Side::Right))
                } else {
                    a.turn.total_cmp(&b.turn)
                }
            });

            let mut grow: Option<usize> = None;
            let mut chosen = None;
            for c in &cands {
                if let Some(i) = inside_any(c.point, footprints) {
                    grow.get_or_insert(i);
                    continue;
                }
                match first_blocker(current, c.point, footprints) {
                    None => {
                        chosen = Some(c.point);
                        break;
                    }
                    Some(i) => {
                        grow.get_or_insert(i);
                    }
                }
            }
            if let Some(p) = chosen {
                break p;
            }
            match grow.filter(|i| !group.contains(i)) {
                Some(i) => group.push(i),
                None => return Err(PlanError::NoCandidate(footprints[blocker].0)),
            }
        };
        vertices.push(next);
        current = next;
    }
    Err(PlanError::IterationLimit(params.max_iterations))
}
