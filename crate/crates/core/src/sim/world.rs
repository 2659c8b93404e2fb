use alloc::vec::Vec;
use core::fmt;

use super::{SimError, VesselState};
use crate::geometry::{circle_polygon, Vec2};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// The four object classes present on the course.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ObjectKind {
    ObstacleBuoy,
    TotemBuoy,
    Dock,
    DeliverBox,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] =
        [ObjectKind::ObstacleBuoy, ObjectKind::TotemBuoy, ObjectKind::Dock, ObjectKind::DeliverBox];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::ObstacleBuoy => "obstacle_buoy",
            ObjectKind::TotemBuoy => "totem_buoy",
            ObjectKind::Dock => "dock",
            ObjectKind::DeliverBox => "deliver_box",
        }
    }

    pub fn from_name(name: &str) -> Option<ObjectKind> {
        ObjectKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Horizontal footprint of an object.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Shape {
    /// Vertical cylinder.
    Circle { center: Vec2, radius: f64 },
    /// Box with full side lengths `extents` along its own axes, rotated by `yaw`.
    Box { center: Vec2, extents: Vec2, yaw: f64 },
}

impl Shape {
    pub fn center(&self) -> Vec2 {
        match *self {
            Shape::Circle { center, .. } | Shape::Box { center, .. } => center,
        }
    }

    /// Distance from `p` to the footprint boundary, zero when inside.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        match *self {
            Shape::Circle { center, radius } => (p.distance(center) - radius).max(0.0),
            Shape::Box { center, extents, yaw } => {
                let local = (p - center).rotate(-yaw);
                let dx = (local.x.abs() - 0.5 * extents.x).max(0.0);
                let dy = (local.y.abs() - 0.5 * extents.y).max(0.0);
                libm::hypot(dx, dy)
            }
        }
    }

    /// Footprint as a CCW convex polygon (circles are circumscribed).
    pub fn polygon(&self, circle_sides: usize) -> Vec<Vec2> {
        match *self {
            Shape::Circle { center, radius } => circle_polygon(center, radius, circle_sides),
            Shape::Box { center, extents, yaw } => {
                let hx = 0.5 * extents.x;
                let hy = 0.5 * extents.y;
                [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
                    .into_iter()
                    .map(|(x, y)| center + Vec2::new(x, y).rotate(yaw))
                    .collect()
            }
        }
    }

    /// First intersection of a planar ray with the footprint boundary.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match *self {
            Shape::Circle { center, radius } => crate::geometry::ray_circle(origin, dir, center, radius),
            Shape::Box { center, extents, yaw } => {
                let o = (origin - center).rotate(-yaw);
                let d = dir.rotate(-yaw);
                let half = [0.5 * extents.x, 0.5 * extents.y];
                slab(&[o.x, o.y], &[d.x, d.y], &[-half[0], -half[1]], &half)
            }
        }
    }
}

/// Ray/axis-aligned-box intersection. Returns the entry parameter, or the exit
/// parameter when the origin is inside.
pub(crate) fn slab<const N: usize>(o: &[f64; N], d: &[f64; N], lo: &[f64; N], hi: &[f64; N]) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for k in 0..N {
        if d[k] == 0.0 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
        } else {
            let a = (lo[k] - o[k]) / d[k];
            let b = (hi[k] - o[k]) / d[k];
            t_enter = t_enter.max(a.min(b));
            t_exit = t_exit.min(a.max(b));
        }
    }
    if t_enter > t_exit || t_exit < 0.0 {
        return None;
    }
    Some(if t_enter >= 0.0 { t_enter } else { t_exit })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WorldObject {
    pub id: u32,
    pub kind: ObjectKind,
    pub shape: Shape,
    /// Height above the sea surface, m.
    pub height: f64,
}

impl WorldObject {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match self.shape {
            Shape::Circle { center, radius } => center.is_finite() && radius.is_finite() && radius > 0.0,
            Shape::Box { center, extents, yaw } => {
                center.is_finite() && yaw.is_finite() && extents.is_finite() && extents.x > 0.0 && extents.y > 0.0
            }
        };
        if !ok {
            return Err(SimError::InvalidParam("object shape"));
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(SimError::InvalidParam("object height"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct World {
    pub objects: Vec<WorldObject>,
}

impl World {
    pub fn new(objects: Vec<WorldObject>) -> Result<Self, SimError> {
        for o in &objects {
            o.validate()?;
        }
        Ok(World { objects })
    }

    pub fn empty() -> Self {
        World::default()
    }

    pub fn object(&self, id: u32) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// True iff the vessel disc touches any footprint. Tangency counts as contact.
pub fn check_collision(world: &World, vessel: &VesselState, vessel_radius: f64) -> bool {
    let p = vessel.pose.position();
    world.objects.iter().any(|o| o.shape.distance_to(p) <= vessel_radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;

    fn buoy(x: f64, y: f64, r: f64) -> WorldObject {
        WorldObject {
            id: 1,
            kind: ObjectKind::ObstacleBuoy,
            shape: Shape::Circle { center: Vec2::new(x, y), radius: r },
            height: 1.0,
        }
    }

    fn vessel_at(x: f64, y: f64) -> VesselState {
        VesselState::at_rest(Pose2D::new(x, y, 0.0))
    }

    #[test]
    fn collision_conventions() {
        let world = World::new(alloc::vec![buoy(5.0, 0.0, 0.5)]).unwrap();
        assert!(check_collision(&world, &vessel_at(5.0, 0.0), 1.0));
        assert!(!check_collision(&world, &vessel_at(0.0, 0.0), 1.0));
        // Exactly tangent: centre distance 1.5 == radius sum.
        assert!(check_collision(&world, &vessel_at(3.5, 0.0), 1.0));
    }

    #[test]
    fn box_distance_and_polygon() {
        let shape = Shape::Box { center: Vec2::new(0.0, 0.0), extents: Vec2::new(4.0, 2.0), yaw: 0.0 };
        assert_eq!(shape.distance_to(Vec2::new(3.0, 0.0)), 1.0);
        assert_eq!(shape.distance_to(Vec2::new(0.5, 0.5)), 0.0);
        assert!((crate::geometry::polygon_area(&shape.polygon(0)) - 8.0).abs() < 1e-12);
        let t = shape.ray_hit(Vec2::new(-10.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        assert!((t - 8.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_objects_are_rejected() {
        assert!(World::new(alloc::vec![buoy(0.0, 0.0, 0.0)]).is_err());
        let mut o = buoy(0.0, 0.0, 1.0);
        o.height = -1.0;
        assert!(World::new(alloc::vec![o]).is_err());
    }
}
