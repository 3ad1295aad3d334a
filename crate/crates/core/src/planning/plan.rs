//! Global plan: a densified polyline with an arclength table.

use std::path::Path;

use thiserror::Error;

use crate::geometry::Vec2;

/// Maximum spacing between consecutive waypoints after densification [m].
pub const MAX_SPACING: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("a plan needs at least two distinct points, got {0}")]
    Degenerate(usize),
    #[error("plan file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("reading plan file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPlan {
    pub waypoints: Vec<Vec2>,
    /// Cumulative arclength at each waypoint.
    pub arclength: Vec<f64>,
}

/// Closest point of the plan to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub distance: f64,
    pub point: Vec2,
    pub segment: usize,
}

fn project_segment(a: Vec2, b: Vec2, p: Vec2) -> (f64, Vec2) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (t, a + ab * t)
}

impl GlobalPlan {
    /// Builds a plan from raw points, dropping exact repeats and inserting
    /// evenly spaced points so no gap exceeds [`MAX_SPACING`].
    pub fn load(points: &[Vec2]) -> Result<Self, PlanError> {
        let mut raw: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if raw.last() != Some(p) {
                raw.push(*p);
            }
        }
        if raw.len() < 2 {
            return Err(PlanError::Degenerate(raw.len()));
        }
        let mut waypoints = vec![raw[0]];
        for w in raw.windows(2) {
            let len = (w[1] - w[0]).norm();
            let pieces = (len / MAX_SPACING - 1e-9).ceil().max(1.0) as usize;
            for k in 1..=pieces {
                waypoints.push(w[0] + (w[1] - w[0]) * (k as f64 / pieces as f64));
            }
        }
        let mut arclength = Vec::with_capacity(waypoints.len());
        let mut s = 0.0;
        arclength.push(0.0);
        for w in waypoints.windows(2) {
            s += (w[1] - w[0]).norm();
            arclength.push(s);
        }
        Ok(Self {
            waypoints,
            arclength,
        })
    }

    /// Parses `x,y` per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, PlanError> {
        let mut pts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| PlanError::Parse { line: i + 1, msg };
            let mut it = line.split(',');
            let (Some(x), Some(y), None) = (it.next(), it.next(), it.next()) else {
                return Err(err(format!("expected `x,y`, found `{line}`")));
            };
            let x: f64 = x.trim().parse().map_err(|e| err(format!("x: {e}")))?;
            let y: f64 = y.trim().parse().map_err(|e| err(format!("y: {e}")))?;
            pts.push(Vec2::new(x, y));
        }
        Self::load(&pts)
    }

    pub fn from_file(path: &Path) -> Result<Self, PlanError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.waypoints.iter().map(|p| format!("{},{}\n", p.x, p.y)).collect()
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap_or(&0.0)
    }

    pub fn goal(&self) -> Vec2 {
        *self.waypoints.last().expect("plan has waypoints")
    }

    /// Point at arclength `s`, clamped to the plan.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let seg = self.arclength.partition_point(|&a| a <= s).clamp(1, self.waypoints.len() - 1) - 1;
        let (a, b) = (self.waypoints[seg], self.waypoints[seg + 1]);
        let len = self.arclength[seg + 1] - self.arclength[seg];
        if len <= 0.0 {
            a
        } else {
            a + (b - a) * ((s - self.arclength[seg]) / len)
        }
    }

    /// Unit tangent at arclength `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let seg = self.arclength.partition_point(|&a| a <= s).clamp(1, self.waypoints.len() - 1) - 1;
        (self.waypoints[seg + 1] - self.waypoints[seg]).normalize()
    }

    fn project_range(&self, p: Vec2, lo: usize, hi: usize) -> Projection {
        let mut best = Projection {
            s: 0.0,
            distance: f64::INFINITY,
            point: self.waypoints[0],
            segment: 0,
        };
        for seg in lo..hi {
            let (a, b) = (self.waypoints[seg], self.waypoints[seg + 1]);
            let (t, q) = project_segment(a, b, p);
            let dist = (p - q).norm();
            if dist < best.distance {
                let s = self.arclength[seg] + t * (self.arclength[seg + 1] - self.arclength[seg]);
                best = Projection {
                    s,
                    distance: dist,
                    point: q,
                    segment: seg,
                };
            }
        }
        best
    }

    /// Global closest point; ties go to the smallest arclength.
    pub fn project(&self, p: Vec2) -> Projection {
        self.project_range(p, 0, self.waypoints.len() - 1)
    }

    /// Closest point among segments overlapping `[s_hint - window, s_hint + window]`.
    /// Keeps progress tracking local on plans that revisit the same area.
    pub fn project_near(&self, p: Vec2, s_hint: f64, window: f64) -> Projection {
        let lo_s = s_hint - window;
        let hi_s = s_hint + window;
        let lo = self.arclength.partition_point(|&a| a < lo_s).saturating_sub(1);
        let hi = self
            .arclength
            .partition_point(|&a| a <= hi_s)
            .clamp(lo + 1, self.waypoints.len() - 1);
        self.project_range(p, lo, hi.max(lo + 1))
    }
}
