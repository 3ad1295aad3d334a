//! Constant-velocity Kalman tracks with global nearest-neighbour association.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// White-acceleration process noise [m/s^2].
    pub sigma_a: f64,
    /// Position measurement noise per axis [m].
    pub sigma_z: f64,
    /// Association gate on predicted-to-detection distance [m].
    pub gate: f64,
    pub confirm_hits: u32,
    pub delete_misses: u32,
    /// Initial velocity standard deviation of a new track [m/s].
    pub sigma_v0: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            sigma_a: 0.8,
            sigma_z: 0.05,
            gate: 1.0,
            confirm_hits: 3,
            delete_misses: 5,
            sigma_v0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    /// `[x, y, vx, vy]`.
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub hits: u32,
    /// Consecutive misses.
    pub misses: u32,
}

impl Track {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.state[2], self.state[3])
    }
}

fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

/// Discrete white-acceleration noise for one axis pair.
pub fn process_noise(dt: f64, sigma_a: f64) -> Matrix4<f64> {
    let q = sigma_a * sigma_a;
    let (a, b, c) = (dt.powi(4) / 4.0, dt.powi(3) / 2.0, dt * dt);
    let mut m = Matrix4::zeros();
    for k in 0..2 {
        m[(k, k)] = a * q;
        m[(k, k + 2)] = b * q;
        m[(k + 2, k)] = b * q;
        m[(k + 2, k + 2)] = c * q;
    }
    m
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// Multi-target store. Track ids start at 1 and are never reused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub config: TrackerConfig,
    pub tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    fn predict(&mut self, dt: f64) {
        let f = transition(dt);
        let q = process_noise(dt, self.config.sigma_a);
        for t in &mut self.tracks {
            t.state = f * t.state;
            t.covariance = f * t.covariance * f.transpose() + q;
        }
    }

    fn correct(track: &mut Track, z: Vec2, sigma_z: f64) {
        let h = observation();
        let r = Matrix2::identity() * sigma_z * sigma_z;
        let p = track.covariance;
        let s = h * p * h.transpose() + r;
        let s_inv = s.try_inverse().unwrap_or_else(Matrix2::identity);
        let k = p * h.transpose() * s_inv;
        let innov = Vector2::new(z.x, z.y) - h * track.state;
        track.state += k * innov;
        // Joseph form keeps the covariance symmetric PSD.
        let i_kh = Matrix4::identity() - k * h;
        let p_new = i_kh * p * i_kh.transpose() + k * r * k.transpose();
        track.covariance = (p_new + p_new.transpose()) / 2.0;
    }

    /// Pairs of (track index, detection index) under the gate.
    fn associate(&self, detections: &[Vec2]) -> Vec<(usize, usize)> {
        let nt = self.tracks.len();
        let nd = detections.len();
        if nt == 0 || nd == 0 {
            return Vec::new();
        }
        const SCALE: f64 = 1e6;
        let miss = -((self.config.gate * 4.0 * SCALE) as i64);
        let dist = |t: usize, d: usize| (self.tracks[t].position() - detections[d]).norm();
        let weight = |t: usize, d: usize| {
            let x = dist(t, d);
            if x <= self.config.gate {
                -((x * SCALE).round() as i64)
            } else {
                miss
            }
        };
        let pairs: Vec<(usize, usize)> = if nt <= nd {
            let m = Matrix::from_fn(nt, nd, |(t, d)| weight(t, d));
            let (_, cols) = kuhn_munkres(&m);
            cols.into_iter().enumerate().collect()
        } else {
            let m = Matrix::from_fn(nd, nt, |(d, t)| weight(t, d));
            let (_, cols) = kuhn_munkres(&m);
            cols.into_iter().enumerate().map(|(d, t)| (t, d)).collect()
        };
        let mut out: Vec<_> = pairs
            .into_iter()
            .filter(|&(t, d)| dist(t, d) <= self.config.gate)
            .collect();
        out.sort_unstable();
        out
    }

    /// Predict, associate, correct, then manage track life cycles.
    pub fn update(&mut self, detections: &[Vec2], dt: f64) {
        assert!(dt > 0.0, "tracker step must be positive");
        self.predict(dt);
        let pairs = self.associate(detections);
        let mut matched_track = vec![false; self.tracks.len()];
        let mut matched_det = vec![false; detections.len()];
        for &(t, d) in &pairs {
            matched_track[t] = true;
            matched_det[d] = true;
            let track = &mut self.tracks[t];
            Self::correct(track, detections[d], self.config.sigma_z);
            track.hits += 1;
            track.misses = 0;
        }
        for (t, matched) in matched_track.iter().enumerate() {
            if !matched {
                self.tracks[t].misses += 1;
            }
        }
        let limit = self.config.delete_misses;
        self.tracks.retain(|t| t.misses < limit);
        for (d, z) in detections.iter().enumerate() {
            if matched_det[d] {
                continue;
            }
            let mut cov = Matrix4::zeros();
            let pz = self.config.sigma_z * self.config.sigma_z;
            let pv = self.config.sigma_v0 * self.config.sigma_v0;
            cov[(0, 0)] = pz;
            cov[(1, 1)] = pz;
            cov[(2, 2)] = pv;
            cov[(3, 3)] = pv;
            self.tracks.push(Track {
                id: self.next_id,
                state: Vector4::new(z.x, z.y, 0.0, 0.0),
                covariance: cov,
                hits: 1,
                misses: 0,
            });
            self.next_id += 1;
        }
    }

    /// Confirmed tracks.
    pub fn published(&self) -> impl Iterator<Item = &Track> {
        let hits = self.config.confirm_hits;
        self.tracks.iter().filter(move |t| t.hits >= hits)
    }
}

impl Default for Tracker {
    fn default() -> Self {
        Self::new(TrackerConfig::default())
    }
}
