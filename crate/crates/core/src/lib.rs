//! Autonomy stack and deterministic planar marine simulator for a
//! differential-drive surface vessel.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and everything touching the filesystem live in the `usv` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod action;
pub mod agent;
pub mod avoidance;
pub mod behaviors;
pub mod cloud;
pub mod control;
pub mod estimation;
pub mod geometry;
pub mod guidance;
pub mod mission;
pub mod perception;
pub mod planning;
pub mod sim;

pub use cloud::{Frame, Point3, PointCloud};
pub use geometry::{wrap_angle, Pose2D, Vec2};
