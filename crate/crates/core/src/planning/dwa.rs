//! Dynamic window local planner over constant-curvature arcs.

use serde::{Deserialize, Serialize};

use super::costmap::{CellState, Costmap};
use super::plan::GlobalPlan;
use crate::geometry::Pose2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwaConfig {
    pub v_max: f64,
    pub omega_max: f64,
    pub accel_max: f64,
    pub alpha_max: f64,
    /// Control period; the window spans one period of acceleration.
    pub period: f64,
    pub horizon: f64,
    pub step: f64,
    /// Samples per axis of the velocity window.
    pub samples: usize,
    pub w_path: f64,
    pub w_goal: f64,
    pub footprint_half: f64,
}

impl Default for DwaConfig {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            omega_max: 1.0,
            accel_max: 1.0,
            alpha_max: 1.5,
            period: 0.1,
            horizon: 3.0,
            step: 0.1,
            samples: 21,
            w_path: 1.0,
            w_goal: 0.1,
            footprint_half: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwaOutput {
    pub v: f64,
    pub omega: f64,
    pub cost: f64,
    /// Some candidate, possibly the stationary one, is collision free.
    pub feasible: bool,
    /// Some collision-free candidate has `v > 0`.
    pub moving_arc: bool,
}

impl DwaOutput {
    pub fn stop() -> Self {
        Self {
            v: 0.0,
            omega: 0.0,
            cost: f64::INFINITY,
            feasible: false,
            moving_arc: false,
        }
    }
}

/// Poses at `step, 2 step, ..., horizon` along the arc.
pub fn rollout(cfg: &DwaConfig, pose: &Pose2, v: f64, omega: f64) -> Vec<Pose2> {
    let n = (cfg.horizon / cfg.step).round() as usize;
    (1..=n).map(|k| pose.advance_arc(v, omega, k as f64 * cfg.step)).collect()
}

/// Collision check. Arc centers must stay out of inflated cells, except that
/// a robot already inside the inflation band may move as long as its
/// clearance does not shrink. Arcs touching the band are re-checked with the
/// full footprint against lethal cells.
pub fn arc_is_safe(cfg: &DwaConfig, costmap: &Costmap, start: &Pose2, poses: &[Pose2]) -> bool {
    let start_clearance = costmap.clearance_at(start.position());
    let mut touched_band = false;
    for p in poses {
        match costmap.state_at(p.position()) {
            CellState::Free => {}
            CellState::Lethal => return false,
            CellState::Inflated => {
                if costmap.clearance_at(p.position()) < start_clearance {
                    return false;
                }
                touched_band = true;
            }
        }
    }
    if touched_band || costmap.state_at(start.position()) != CellState::Free {
        std::iter::once(start)
            .chain(poses)
            .all(|p| !costmap.footprint_hits_lethal(p, cfg.footprint_half))
    } else {
        true
    }
}

/// Endpoint cost: squared distance to the plan plus remaining arclength.
pub fn endpoint_cost(cfg: &DwaConfig, plan: &GlobalPlan, end: &Pose2, s_hint: f64) -> f64 {
    let window = cfg.v_max * cfg.horizon + 1.0;
    let proj = plan.project_near(end.position(), s_hint, window);
    cfg.w_path * proj.distance * proj.distance + cfg.w_goal * (plan.length() - proj.s).max(0.0)
}

fn window(center: f64, rate: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = (center - rate).clamp(lo, hi);
    let b = (center + rate).clamp(lo, hi);
    (a, b)
}

fn samples(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if n == 1 { lo } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
}

/// Picks the lowest-cost collision-free arc from the window around the last
/// command `(v0, omega0)`. Ties go to the smallest `|omega|`, then the
/// smallest `v`. The stationary command is always a candidate.
pub fn plan_step(
    cfg: &DwaConfig,
    costmap: &Costmap,
    plan: &GlobalPlan,
    pose: &Pose2,
    v0: f64,
    omega0: f64,
    s_hint: f64,
) -> DwaOutput {
    let (v_lo, v_hi) = window(v0, cfg.accel_max * cfg.period, 0.0, cfg.v_max);
    let (w_lo, w_hi) = window(omega0, cfg.alpha_max * cfg.period, -cfg.omega_max, cfg.omega_max);
    let mut best = DwaOutput::stop();
    let mut any_moving = false;
    let mut consider = |v: f64, omega: f64, best: &mut DwaOutput| {
        let poses = rollout(cfg, pose, v, omega);
        if !arc_is_safe(cfg, costmap, pose, &poses) {
            return;
        }
        if v > 0.0 {
            any_moving = true;
        }
        let cost = endpoint_cost(cfg, plan, poses.last().unwrap_or(pose), s_hint);
        let tol = 1e-12 * cost.abs().max(1.0);
        let better = !best.feasible
            || cost < best.cost - tol
            || ((cost - best.cost).abs() <= tol
                && (omega.abs() < best.omega.abs() || (omega.abs() == best.omega.abs() && v < best.v)));
        if better {
            *best = DwaOutput {
                v,
                omega,
                cost,
                feasible: true,
                moving_arc: false,
            };
        }
    };
    for v in samples(v_lo, v_hi, cfg.samples) {
        for omega in samples(w_lo, w_hi, cfg.samples) {
            consider(v, omega, &mut best);
        }
    }
    consider(0.0, 0.0, &mut best);
    best.moving_arc = any_moving;
    best
}
