//! Picks the user among the confirmed tracks behind the robot.

use serde::{Deserialize, Serialize};

use super::tracker::Track;
use crate::distance_control::UserEstimate;
use crate::geometry::{Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    /// Depth of the region behind the robot [m].
    pub behind: f64,
    /// Half-width of the region [m].
    pub lateral: f64,
    /// Time constant of the `a_VI` filter [s].
    pub accel_tau: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            behind: 4.0,
            lateral: 1.0,
            accel_tau: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSelection {
    pub track_id: u64,
    /// Robot-to-user distance along the robot heading [m].
    pub d: f64,
    /// User velocity along the robot heading [m/s].
    pub v_vi: f64,
    pub a_vi: f64,
    pub position: Vec2,
}

impl UserSelection {
    /// Estimate for the distance controller; `p_robot` is the robot's
    /// curvilinear abscissa.
    pub fn estimate(&self, p_robot: f64) -> UserEstimate {
        UserEstimate {
            d: self.d,
            p_vi: p_robot - self.d,
            v_vi: self.v_vi,
            a_vi: self.a_vi,
            valid: true,
            age: 0.0,
        }
    }
}

/// Memoryless part of the selection: the track in the ROI nearest to the
/// point `d_ref` behind the robot. Returns the track and its distance `d`.
pub fn select_user<'a>(
    tracks: impl IntoIterator<Item = &'a Track>,
    robot: &Pose2,
    d_ref: f64,
    roi: &RoiConfig,
) -> Option<(&'a Track, f64)> {
    let rear = Vec2::new(-d_ref, 0.0);
    let mut best: Option<(&Track, f64, f64)> = None;
    for t in tracks {
        let local = robot.to_local(t.position());
        if local.x > 0.0 || local.x < -roi.behind || local.y.abs() > roi.lateral {
            continue;
        }
        let dist = (local - rear).norm();
        let better = match best {
            None => true,
            Some((b, bd, _)) => dist < bd || (dist == bd && t.id < b.id),
        };
        if better {
            best = Some((t, dist, -local.x));
        }
    }
    best.map(|(t, _, d)| (t, d))
}

/// Stateful selector adding the filtered user acceleration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserSelector {
    pub roi: RoiConfig,
    last: Option<(u64, f64, f64)>,
}

impl UserSelector {
    pub fn new(roi: RoiConfig) -> Self {
        Self { roi, last: None }
    }

    pub fn update<'a>(
        &mut self,
        tracks: impl IntoIterator<Item = &'a Track>,
        robot: &Pose2,
        d_ref: f64,
        dt: f64,
    ) -> Option<UserSelection> {
        let Some((track, d)) = select_user(tracks, robot, d_ref, &self.roi) else {
            self.last = None;
            return None;
        };
        let v_vi = track.velocity().dot(&robot.heading());
        let a_vi = match self.last {
            Some((id, v_prev, a_prev)) if id == track.id => {
                let raw = (v_vi - v_prev) / dt;
                a_prev + dt / (self.roi.accel_tau + dt) * (raw - a_prev)
            }
            _ => 0.0,
        };
        self.last = Some((track.id, v_vi, a_vi));
        Some(UserSelection {
            track_id: track.id,
            d,
            v_vi,
            a_vi,
            position: track.position(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    fn track(id: u64, x: f64, y: f64) -> Track {
        Track {
            id,
            state: Vector4::new(x, y, 0.0, 0.0),
            covariance: Matrix4::identity(),
            hits: 3,
            misses: 0,
        }
    }

    #[test]
    fn track_at_rear_point_selected() {
        let robot = Pose2::new(0.0, 0.0, 0.0);
        let t = [track(1, -1.5, 0.0)];
        let (sel, d) = select_user(&t, &robot, 1.5, &RoiConfig::default()).unwrap();
        assert_eq!(sel.id, 1);
        assert!((d - 1.5).abs() < 1e-12);
    }

    #[test]
    fn outside_roi_ignored() {
        let robot = Pose2::new(0.0, 0.0, 0.0);
        let t = [track(1, 1.0, 0.0), track(2, -1.5, 1.5), track(3, -4.5, 0.0)];
        assert!(select_user(&t, &robot, 1.5, &RoiConfig::default()).is_none());
    }

    #[test]
    fn acceleration_resets_on_switch() {
        let robot = Pose2::new(0.0, 0.0, 0.0);
        let mut s = UserSelector::default();
        let mut t = track(1, -1.5, 0.0);
        s.update([&t], &robot, 1.5, 0.1);
        t.state[2] = 0.5;
        let a = s.update([&t], &robot, 1.5, 0.1).unwrap().a_vi;
        assert!((a - 0.1 / 0.4 * 5.0).abs() < 1e-12);
        let mut other = track(2, -1.5, 0.0);
        other.state[2] = 1.0;
        assert_eq!(s.update([&other], &robot, 1.5, 0.1).unwrap().a_vi, 0.0);
    }
}
