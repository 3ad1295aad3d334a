//! Planar LiDAR perception: height filtering, Euclidean clustering and the
//! human-size gate. Tracking and user selection live in the submodules.

pub mod scan_file;
pub mod select;
pub mod tracker;

use std::collections::{HashMap, VecDeque};

use nalgebra::{Matrix2, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2, Vec2};

pub use select::{select_user, RoiConfig, UserSelection, UserSelector};
pub use tracker::{Track, Tracker, TrackerConfig};

/// Mounting height of the scanner above the ground [m].
pub const SENSOR_HEIGHT: f64 = 0.8;
pub const GROUND_Z_MIN: f64 = 0.1;
pub const GROUND_Z_MAX: f64 = 2.3;
/// Single-linkage distance threshold [m].
pub const CLUSTER_TOLERANCE: f64 = 0.3;
pub const CLUSTER_MIN_POINTS: usize = 3;
/// Nominal radius of a person's cross-section at sensor height [m].
pub const BODY_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    /// Beam angle in the sensor frame [rad], in [0, 2 pi).
    pub angle: f64,
    /// Measured range [m]; equals the maximum range on a miss.
    pub range: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub timestamp: f64,
    pub origin: Pose2,
    pub beams: Vec<Beam>,
}

impl Scan {
    /// Hit points in the world frame, lifted to the sensor height.
    pub fn points3d(&self) -> Vec<Vector3<f64>> {
        self.beams
            .iter()
            .filter(|b| b.hit)
            .map(|b| {
                let p = self
                    .origin
                    .to_world(Vec2::new(b.range * b.angle.cos(), b.range * b.angle.sin()));
                Vector3::new(p.x, p.y, SENSOR_HEIGHT)
            })
            .collect()
    }

    /// Planar obstacle points after the height filter.
    pub fn obstacle_points(&self) -> Vec<Vec2> {
        filter_ground(&self.points3d())
    }
}

/// Keeps points with `0.1 < z < 2.3` and drops the height.
pub fn filter_ground(points: &[Vector3<f64>]) -> Vec<Vec2> {
    points
        .iter()
        .filter(|p| p.z > GROUND_Z_MIN && p.z < GROUND_Z_MAX)
        .map(|p| Vec2::new(p.x, p.y))
        .collect()
}

/// Oriented bounding box from the principal axes of the points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    /// Extent along the major axis [m].
    pub width: f64,
    /// Extent along the minor axis [m].
    pub depth: f64,
    /// Major-axis direction [rad].
    pub angle: f64,
}

impl OrientedBox {
    pub fn fit(points: &[Vec2]) -> Self {
        let n = points.len().max(1) as f64;
        let mean = points.iter().fold(Vec2::zeros(), |a, p| a + p) / n;
        let cov = points.iter().fold(Matrix2::zeros(), |a, p| {
            let d = p - mean;
            a + d * d.transpose()
        }) / n;
        let eig = SymmetricEigen::new(cov);
        let major_idx = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
        let major: Vec2 = eig.eigenvectors.column(major_idx).into();
        let minor = Vec2::new(-major.y, major.x);
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for p in points {
            let d = p - mean;
            let q = Vec2::new(d.dot(&major), d.dot(&minor));
            lo = lo.inf(&q);
            hi = hi.sup(&q);
        }
        if points.is_empty() {
            lo = Vec2::zeros();
            hi = Vec2::zeros();
        }
        let mid = (lo + hi) / 2.0;
        Self {
            center: mean + major * mid.x + minor * mid.y,
            width: hi.x - lo.x,
            depth: hi.y - lo.y,
            angle: major.y.atan2(major.x),
        }
    }

    pub fn contains(&self, p: Vec2, slack: f64) -> bool {
        let major = Vec2::new(self.angle.cos(), self.angle.sin());
        let minor = Vec2::new(-major.y, major.x);
        let d = p - self.center;
        d.dot(&major).abs() <= self.width / 2.0 + slack && d.dot(&minor).abs() <= self.depth / 2.0 + slack
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub points: Vec<Vec2>,
    pub centroid: Vec2,
    pub bbox: OrientedBox,
}

impl Cluster {
    pub fn new(points: Vec<Vec2>) -> Self {
        let centroid = points.iter().fold(Vec2::zeros(), |a, p| a + p) / points.len().max(1) as f64;
        let bbox = OrientedBox::fit(&points);
        Self {
            points,
            centroid,
            bbox,
        }
    }
}

fn cell_of(p: &Vec2, size: f64) -> (i64, i64) {
    ((p.x / size).floor() as i64, (p.y / size).floor() as i64)
}

/// Groups point indices by single linkage (`|p - q| <= tol`). Groups are
/// ordered by their smallest index, members ascending.
pub fn single_linkage(points: &[Vec2], tol: f64) -> Vec<Vec<usize>> {
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell_of(p, tol)).or_default().push(i);
    }
    let tol2 = tol * tol;
    let mut label = vec![usize::MAX; points.len()];
    let mut groups = Vec::new();
    for seed in 0..points.len() {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = groups.len();
        label[seed] = id;
        let mut members = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            let (cx, cy) = cell_of(&points[i], tol);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                        continue;
                    };
                    for &j in bucket {
                        if label[j] == usize::MAX && (points[j] - points[i]).norm_squared() <= tol2 {
                            label[j] = id;
                            members.push(j);
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

/// Euclidean clustering with the default tolerance and minimum size.
pub fn cluster(points: &[Vec2]) -> Vec<Cluster> {
    single_linkage(points, CLUSTER_TOLERANCE)
        .into_iter()
        .filter(|g| g.len() >= CLUSTER_MIN_POINTS)
        .map(|g| Cluster::new(g.into_iter().map(|i| points[i]).collect()))
        .collect()
}

/// Planar human-size gate on the oriented box.
pub fn gate_human(c: &Cluster) -> bool {
    const MIN_SIDE: f64 = 0.15;
    const MAX_SIDE: f64 = 1.0;
    // Tolerate rounding on the closed interval.
    const EPS: f64 = 1e-9;
    let lo = c.bbox.width.min(c.bbox.depth);
    let hi = c.bbox.width.max(c.bbox.depth);
    lo >= MIN_SIDE - EPS && hi <= MAX_SIDE + EPS
}

/// Mean range, along the center ray, of the returns of a disc of radius `r`
/// whose center is `dist` away, for beams uniform in angle.
fn mean_return_depth(r: f64, dist: f64) -> f64 {
    const N: usize = 64;
    let phi_max = (r / dist).min(1.0).asin();
    let mut sum = 0.0;
    for k in 0..N {
        let phi = phi_max * (2.0 * (k as f64 + 0.5) / N as f64 - 1.0);
        let t = dist * phi.cos() - (r * r - (dist * phi.sin()).powi(2)).max(0.0).sqrt();
        sum += t * phi.cos();
    }
    sum / N as f64
}

/// Body center behind a visible surface arc. The returns of a round body of
/// radius [`BODY_RADIUS`] have their centroid in front of its center; the
/// center range solves the uniform-beam centroid relation by fixed-point
/// iteration.
pub fn body_center(c: &Cluster, sensor: Vec2) -> Vec2 {
    let ray = c.centroid - sensor;
    let observed = ray.norm();
    if observed < 1e-9 {
        return c.centroid;
    }
    let mut dist = observed + std::f64::consts::FRAC_PI_4 * BODY_RADIUS;
    for _ in 0..8 {
        dist += observed - mean_return_depth(BODY_RADIUS, dist);
    }
    sensor + ray / observed * dist
}

/// Body centers of the human-sized clusters in a scan.
pub fn detect_people(scan: &Scan) -> Vec<Vec2> {
    let sensor = scan.origin.position();
    cluster(&scan.obstacle_points())
        .into_iter()
        .filter(gate_human)
        .map(|c| body_center(&c, sensor))
        .collect()
}
