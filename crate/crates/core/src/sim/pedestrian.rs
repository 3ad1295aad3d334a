//! Scripted pedestrians moving along polylines.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::planning::plan::GlobalPlan;

/// Piecewise-linear speed versus time, held constant outside the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile(pub Vec<[f64; 2]>);

impl SpeedProfile {
    pub fn constant(v: f64) -> Self {
        Self(vec![[0.0, v]])
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = &self.0;
        match k.iter().position(|p| p[0] > t) {
            None => k.last().map_or(0.0, |p| p[1]),
            Some(0) => k[0][1],
            Some(i) => {
                let ([t0, v0], [t1, v1]) = (k[i - 1], k[i]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.0.is_empty() {
            return Err("empty speed profile".into());
        }
        for w in self.0.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err("profile times must increase".into());
            }
        }
        if self.0.iter().any(|p| !(0.0..=3.0).contains(&p[1])) {
            return Err("profile speeds must lie in [0, 3] m/s".into());
        }
        Ok(())
    }
}

/// Follower behavior: slows down when closer than `min_gap` to the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowerParams {
    pub min_gap: f64,
    /// Gap increase over which the speed ramps back to the profile [m].
    pub ramp: f64,
    pub accel: f64,
    pub decel: f64,
    pub start_time: f64,
}

impl Default for FollowerParams {
    fn default() -> Self {
        Self {
            min_gap: 0.8,
            ramp: 0.5,
            accel: 1.0,
            decel: 2.0,
            start_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pedestrian {
    pub id: usize,
    pub path: GlobalPlan,
    /// Arclength along `path`; negative values extend the first segment backwards.
    pub s: f64,
    pub v: f64,
    pub profile: SpeedProfile,
    pub follower: Option<FollowerParams>,
}

impl Pedestrian {
    pub fn position(&self) -> Vec2 {
        if self.s < 0.0 {
            self.path.waypoints[0] + self.path.tangent_at(0.0) * self.s
        } else {
            self.path.point_at(self.s)
        }
    }

    pub fn direction(&self) -> Vec2 {
        self.path.tangent_at(self.s.max(0.0))
    }

    pub fn velocity(&self) -> Vec2 {
        if self.s >= self.path.length() {
            Vec2::zeros()
        } else {
            self.direction() * self.v
        }
    }

    /// Advances by `dt` at time `t`, given the robot position.
    pub fn step(&mut self, t: f64, dt: f64, robot: Vec2) {
        let desired = self.profile.at(t);
        self.v = match &self.follower {
            None => desired,
            Some(f) => {
                let target = if t < f.start_time {
                    0.0
                } else {
                    let gap = (robot - self.position()).norm();
                    desired * ((gap - f.min_gap) / f.ramp).clamp(0.0, 1.0)
                };
                self.v + (target - self.v).clamp(-f.decel * dt, f.accel * dt)
            }
        };
        self.s = (self.s + self.v * dt).min(self.path.length());
    }
}

/// Shifts a polyline sideways by `offset` (left positive) using per-vertex
/// averaged normals.
pub fn offset_polyline(points: &[Vec2], offset: f64) -> Vec<Vec2> {
    let n = points.len();
    (0..n)
        .map(|k| {
            let before = (k > 0).then(|| (points[k] - points[k - 1]).normalize());
            let after = (k + 1 < n).then(|| (points[k + 1] - points[k]).normalize());
            let t = match (before, after) {
                (Some(a), Some(b)) => {
                    let s = a + b;
                    if s.norm() < 1e-9 { a } else { s.normalize() }
                }
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => Vec2::new(1.0, 0.0),
            };
            points[k] + Vec2::new(-t.y, t.x) * offset
        })
        .collect()
}
