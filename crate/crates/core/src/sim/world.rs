//! Static world grid, synthetic LiDAR and collision geometry.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Pose2, Vec2};
use crate::perception::{Beam, Scan};
use crate::planning::costmap::{squared_distance_transform, GridError, NavGrid};

/// Binary occupancy grid of the simulated world.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    /// World position of the lower-left corner.
    pub origin: Vec2,
    pub width: usize,
    pub height: usize,
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(origin: Vec2, size: Vec2, resolution: f64) -> Self {
        let width = (size.x / resolution).round().max(1.0) as usize;
        let height = (size.y / resolution).round().max(1.0) as usize;
        Self {
            resolution,
            origin,
            width,
            height,
            occupied: vec![false; width * height],
        }
    }

    /// Dark pixels (below 128) are occupied; same orientation as [`NavGrid`].
    pub fn load(path: &Path, resolution: f64, origin: Vec2) -> Result<Self, GridError> {
        let nav = NavGrid::load(path, resolution, origin)?;
        Ok(Self {
            resolution,
            origin,
            width: nav.width,
            height: nav.height,
            occupied: nav.navigable.iter().map(|n| !n).collect(),
        })
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.resolution
    }

    fn for_cells_in(&mut self, min: Vec2, max: Vec2, mut f: impl FnMut(Vec2) -> bool) {
        let lo_i = (((min.x - self.origin.x) / self.resolution).floor().max(0.0)) as usize;
        let lo_j = (((min.y - self.origin.y) / self.resolution).floor().max(0.0)) as usize;
        let hi_i = (((max.x - self.origin.x) / self.resolution).ceil().max(0.0) as usize).min(self.width);
        let hi_j = (((max.y - self.origin.y) / self.resolution).ceil().max(0.0) as usize).min(self.height);
        for j in lo_j..hi_j {
            for i in lo_i..hi_i {
                if f(self.cell_center(i, j)) {
                    self.occupied[j * self.width + i] = true;
                }
            }
        }
    }

    /// Fills the cells whose centers lie in the rectangle.
    pub fn fill_rect(&mut self, min: Vec2, max: Vec2) {
        self.for_cells_in(min, max, |c| c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y);
    }

    /// Fills the cells whose centers lie in the disc.
    pub fn fill_disc(&mut self, center: Vec2, radius: f64) {
        let r = Vec2::new(radius, radius);
        self.for_cells_in(center - r, center + r, |c| (c - center).norm() <= radius);
    }

    pub fn is_occupied_cell(&self, i: i64, j: i64) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.width
            && (j as usize) < self.height
            && self.occupied[j as usize * self.width + i as usize]
    }

    pub fn is_occupied(&self, p: Vec2) -> bool {
        let c = (p - self.origin) / self.resolution;
        self.is_occupied_cell(c.x.floor() as i64, c.y.floor() as i64)
    }

    /// Distance along the ray to the first occupied cell, by grid traversal.
    pub fn raycast(&self, from: Vec2, dir: Vec2, max_range: f64) -> Option<f64> {
        let res = self.resolution;
        let size = Vec2::new(self.width as f64, self.height as f64) * res;
        // Clip the ray to the grid bounds (slab method).
        let mut t0: f64 = 0.0;
        let mut t1 = max_range;
        for ax in 0..2 {
            let (o, d, lo, hi) = (from[ax], dir[ax], self.origin[ax], self.origin[ax] + size[ax]);
            if d.abs() < 1e-15 {
                if o < lo || o >= hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - o) / d, (hi - o) / d);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t0 > t1 {
            return None;
        }
        let start = from + dir * t0;
        let c = (start - self.origin) / res;
        let mut i = (c.x.floor() as i64).clamp(0, self.width as i64 - 1);
        let mut j = (c.y.floor() as i64).clamp(0, self.height as i64 - 1);
        let step_i: i64 = if dir.x >= 0.0 { 1 } else { -1 };
        let step_j: i64 = if dir.y >= 0.0 { 1 } else { -1 };
        let next_boundary = |cell: i64, step: i64, o: f64| o + (cell + i64::from(step > 0)) as f64 * res;
        let inv = |d: f64| if d.abs() < 1e-15 { f64::INFINITY } else { 1.0 / d.abs() };
        let mut t_max_x = if dir.x.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (next_boundary(i, step_i, self.origin.x) - from.x) / dir.x
        };
        let mut t_max_y = if dir.y.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (next_boundary(j, step_j, self.origin.y) - from.y) / dir.y
        };
        let (dt_x, dt_y) = (res * inv(dir.x), res * inv(dir.y));
        let mut t = t0;
        loop {
            if self.is_occupied_cell(i, j) {
                return (t <= max_range).then_some(t);
            }
            if t_max_x < t_max_y {
                t = t_max_x;
                t_max_x += dt_x;
                i += step_i;
            } else {
                t = t_max_y;
                t_max_y += dt_y;
                j += step_j;
            }
            if t > t1 || i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
                return None;
            }
        }
    }

    /// Distance from each cell center to the nearest occupied cell center [m].
    pub fn distance_field(&self) -> Vec<f64> {
        squared_distance_transform(&self.occupied, self.width, self.height)
            .into_iter()
            .map(|d2| d2.sqrt() * self.resolution)
            .collect()
    }
}

/// Smallest positive ray parameter hitting a circle.
pub fn ray_circle(from: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let f = from - center;
    let b = f.dot(&dir);
    let c = f.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [-b - sq, -b + sq].into_iter().find(|&t| t > 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarConfig {
    pub beams: usize,
    pub max_range: f64,
    pub range_noise: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: 720,
            max_range: 25.0,
            range_noise: 0.02,
        }
    }
}

/// Radius of the simulated pedestrian discs [m].
pub const PEDESTRIAN_RADIUS: f64 = 0.25;

/// Synthetic scan from the true sensor pose. Beam angles are in the sensor
/// frame; `origin` is stamped into the scan as the pose the robot believes.
pub fn raycast<R: Rng>(
    grid: &OccupancyGrid,
    pedestrians: &[Vec2],
    sensor: &Pose2,
    origin: Pose2,
    cfg: &LidarConfig,
    timestamp: f64,
    rng: &mut R,
) -> Scan {
    let noise = (cfg.range_noise > 0.0).then(|| Normal::new(0.0, cfg.range_noise).expect("finite sigma"));
    let from = sensor.position();
    let beams = (0..cfg.beams)
        .map(|k| {
            let angle = k as f64 * std::f64::consts::TAU / cfg.beams as f64;
            let dir = Vec2::new((sensor.theta + angle).cos(), (sensor.theta + angle).sin());
            let mut best = grid.raycast(from, dir, cfg.max_range);
            for c in pedestrians {
                if let Some(t) = ray_circle(from, dir, *c, PEDESTRIAN_RADIUS) {
                    if t <= cfg.max_range && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                }
            }
            match best {
                Some(r) => {
                    let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
                    Beam {
                        angle,
                        range: (r + n).max(0.0),
                        hit: true,
                    }
                }
                None => Beam {
                    angle,
                    range: cfg.max_range,
                    hit: false,
                },
            }
        })
        .collect();
    Scan {
        timestamp,
        origin,
        beams,
    }
}

/// Separating-axis overlap test between the square footprint at `pose` and
/// an axis-aligned box.
pub fn footprint_overlaps_box(pose: &Pose2, half: f64, min: Vec2, max: Vec2) -> bool {
    let center = (min + max) * 0.5;
    let ext = (max - min) * 0.5;
    let (h, l) = (pose.heading(), pose.left());
    let d = center - pose.position();
    let axes = [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), h, l];
    axes.iter().all(|ax| {
        let r_box = ext.x * ax.x.abs() + ext.y * ax.y.abs();
        let r_fp = half * (h.dot(ax).abs() + l.dot(ax).abs());
        d.dot(ax).abs() <= r_box + r_fp
    })
}

/// Distance from a point to the square footprint (zero inside).
pub fn footprint_distance(pose: &Pose2, half: f64, p: Vec2) -> f64 {
    let local = pose.to_local(p);
    let dx = (local.x.abs() - half).max(0.0);
    let dy = (local.y.abs() - half).max(0.0);
    dx.hypot(dy)
}

fn grid_overlap(
    pose: &Pose2,
    half: f64,
    origin: Vec2,
    res: f64,
    (w, h): (usize, usize),
    blocked: impl Fn(usize, usize) -> bool,
) -> bool {
    let reach = half * std::f64::consts::SQRT_2;
    let lo_i = ((pose.x - reach - origin.x) / res).floor().max(0.0) as usize;
    let lo_j = ((pose.y - reach - origin.y) / res).floor().max(0.0) as usize;
    let hi_i = (((pose.x + reach - origin.x) / res).floor() + 1.0).clamp(0.0, w as f64) as usize;
    let hi_j = (((pose.y + reach - origin.y) / res).floor() + 1.0).clamp(0.0, h as f64) as usize;
    for j in lo_j..hi_j {
        for i in lo_i..hi_i {
            if blocked(i, j) {
                let min = origin + Vec2::new(i as f64, j as f64) * res;
                if footprint_overlaps_box(pose, half, min, min + Vec2::new(res, res)) {
                    return true;
                }
            }
        }
    }
    false
}

/// Whether the footprint touches an occupied world cell or a non-navigable
/// cell of the navigability map.
pub fn footprint_in_collision(grid: &OccupancyGrid, nav: Option<&NavGrid>, pose: &Pose2, half: f64) -> bool {
    if grid_overlap(pose, half, grid.origin, grid.resolution, (grid.width, grid.height), |i, j| {
        grid.occupied[j * grid.width + i]
    }) {
        return true;
    }
    nav.is_some_and(|n| {
        grid_overlap(pose, half, n.origin, n.resolution, (n.width, n.height), |i, j| {
            !n.navigable[j * n.width + i]
        })
    })
}
