//! Planar geometry shared by perception, planning and the simulator.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

/// Planar pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, counter-clockwise from +x.
    pub theta: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unit vector along the heading.
    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    /// Unit vector pointing to the left of the heading.
    pub fn left(&self) -> Vec2 {
        Vec2::new(-self.theta.sin(), self.theta.cos())
    }

    /// Expresses a world point in this pose's frame (x forward, y left).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let rel = p - self.position();
        Vec2::new(rel.dot(&self.heading()), rel.dot(&self.left()))
    }

    /// Maps a point from this pose's frame into the world frame.
    pub fn to_world(&self, p: Vec2) -> Vec2 {
        self.position() + self.heading() * p.x + self.left() * p.y
    }

    /// Pose reached after driving a constant (v, omega) arc for `t` seconds.
    pub fn advance_arc(&self, v: f64, omega: f64, t: f64) -> Pose2 {
        if omega.abs() < 1e-9 {
            Pose2::new(
                self.x + v * t * self.theta.cos(),
                self.y + v * t * self.theta.sin(),
                self.theta,
            )
        } else {
            let theta = self.theta + omega * t;
            let r = v / omega;
            Pose2::new(
                self.x + r * (theta.sin() - self.theta.sin()),
                self.y - r * (theta.cos() - self.theta.cos()),
                theta,
            )
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_world_round_trip() {
        let pose = Pose2::new(1.0, -2.0, 0.7);
        let p = Vec2::new(3.0, 4.0);
        let back = pose.to_world(pose.to_local(p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn arc_matches_straight_line_limit() {
        let pose = Pose2::new(0.0, 0.0, 0.3);
        let a = pose.advance_arc(1.0, 1e-12, 2.0);
        let b = pose.advance_arc(1.0, 1e-6, 2.0);
        assert!((a.position() - b.position()).norm() < 1e-5);
    }

    #[test]
    fn full_circle_returns_home() {
        let pose = Pose2::new(2.0, 1.0, 0.0);
        let end = pose.advance_arc(1.0, 0.5, std::f64::consts::TAU / 0.5);
        assert!((end.position() - pose.position()).norm() < 1e-9);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-12);
    }
}
