//! Scenario files (TOML) and their resolution into a runnable world.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pedestrian::{offset_polyline, FollowerParams, Pedestrian, SpeedProfile};
use super::world::{LidarConfig, OccupancyGrid};
use crate::geometry::{Pose2, Vec2};
use crate::planning::costmap::{GridError, NavGrid};
use crate::planning::dwa::DwaConfig;
use crate::planning::plan::{GlobalPlan, PlanError};
use crate::supervision::FsmConfig;
use crate::synthesis::gains::{GainsFile, GainsFileError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario syntax: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Gains(#[from] GainsFileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stack {
    #[default]
    Full,
    /// Longitudinal loop only: the distance controller drives the robot
    /// straight, bypassing planner and supervisor.
    DistanceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRef {
    pub file: PathBuf,
    pub resolution: f64,
    pub origin: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default = "default_world_resolution")]
    pub resolution: f64,
    pub origin: [f64; 2],
    pub size: [f64; 2],
    /// Occupancy image overlaid on the primitives.
    pub occupancy: Option<GridRef>,
    #[serde(default)]
    pub rects: Vec<[f64; 4]>,
    #[serde(default)]
    pub discs: Vec<[f64; 3]>,
    pub navigability: Option<GridRef>,
}

fn default_world_resolution() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub waypoints: Option<Vec<[f64; 2]>>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    /// x [m], y [m], heading [deg].
    pub pose: [f64; 3],
    #[serde(default = "default_d_ref")]
    pub d_ref: f64,
    pub gains: Option<PathBuf>,
    #[serde(default)]
    pub pose_noise: bool,
    #[serde(default = "default_range_noise")]
    pub range_noise: f64,
}

fn default_d_ref() -> f64 {
    1.5
}

fn default_range_noise() -> f64 {
    0.02
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianSpec {
    #[serde(default)]
    pub role: Role,
    /// Explicit path; defaults to the plan shifted by `offset`.
    pub waypoints: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub start_s: f64,
    pub profile: Vec<[f64; 2]>,
    pub follower: Option<FollowerParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ManualAck,
    ManualStop,
    Quality,
    DRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    #[serde(default)]
    pub value: f64,
}

/// Pass conditions checked after a run; absent fields are not checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub max_abs_error: Option<f64>,
    pub steady_state_error: Option<f64>,
    pub settling_time: Option<f64>,
    pub max_overshoot: Option<f64>,
    pub reach_goal: Option<bool>,
    pub no_wrong_selection: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    #[serde(default)]
    pub stack: Stack,
    #[serde(default = "default_controller")]
    pub controller: u8,
    pub world: WorldSpec,
    pub plan: PlanSpec,
    pub robot: RobotSpec,
    #[serde(default)]
    pub pedestrians: Vec<PedestrianSpec>,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub expect: Expectations,
    #[serde(default)]
    pub dwa: DwaConfig,
    #[serde(default)]
    pub fsm: FsmConfig,
}

fn default_controller() -> u8 {
    2
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub stack: Stack,
    pub controller: u8,
    pub grid: OccupancyGrid,
    pub nav: Option<NavGrid>,
    pub plan: GlobalPlan,
    pub robot_pose: Pose2,
    pub d_ref: f64,
    pub gains: Option<GainsFile>,
    pub pose_noise: bool,
    pub lidar: LidarConfig,
    /// The user, when present, is first.
    pub pedestrians: Vec<Pedestrian>,
    pub has_user: bool,
    pub events: Vec<Event>,
    pub expect: Expectations,
    pub dwa: DwaConfig,
    pub fsm: FsmConfig,
}

fn v2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Resolves file references relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<Scenario, ScenarioError> {
        if !(self.duration > 0.0) {
            return Err(invalid("duration must be positive"));
        }
        if !matches!(self.controller, 1 | 2) {
            return Err(invalid(format!("controller must be 1 or 2, got {}", self.controller)));
        }
        let w = &self.world;
        if !(w.resolution > 0.0) || w.size.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("world resolution and size must be positive"));
        }
        let mut grid = OccupancyGrid::empty(v2(w.origin), v2(w.size), w.resolution);
        if let Some(g) = &w.occupancy {
            let img = OccupancyGrid::load(&base.join(&g.file), g.resolution, v2(g.origin))?;
            for j in 0..img.height {
                for i in 0..img.width {
                    if img.occupied[j * img.width + i] {
                        let c = img.cell_center(i, j);
                        let h = Vec2::new(img.resolution, img.resolution) * 0.5;
                        grid.fill_rect(c - h, c + h);
                    }
                }
            }
        }
        for r in &w.rects {
            grid.fill_rect(Vec2::new(r[0].min(r[2]), r[1].min(r[3])), Vec2::new(r[0].max(r[2]), r[1].max(r[3])));
        }
        for d in &w.discs {
            grid.fill_disc(Vec2::new(d[0], d[1]), d[2]);
        }
        let nav = match &w.navigability {
            Some(g) => Some(NavGrid::load(&base.join(&g.file), g.resolution, v2(g.origin))?),
            None => None,
        };
        let plan = match (&self.plan.waypoints, &self.plan.file) {
            (Some(pts), None) => GlobalPlan::load(&pts.iter().map(|p| v2(*p)).collect::<Vec<_>>())?,
            (None, Some(f)) => GlobalPlan::from_file(&base.join(f))?,
            _ => return Err(invalid("plan needs exactly one of `waypoints` or `file`")),
        };
        let gains = match &self.robot.gains {
            Some(f) => Some(GainsFile::load(&base.join(f))?),
            None => None,
        };
        let users = self.pedestrians.iter().filter(|p| p.role == Role::User).count();
        if users > 1 {
            return Err(invalid("at most one pedestrian can be the user"));
        }
        let mut specs: Vec<&PedestrianSpec> = self.pedestrians.iter().collect();
        specs.sort_by_key(|p| p.role != Role::User);
        let mut pedestrians = Vec::new();
        for (id, p) in specs.into_iter().enumerate() {
            let profile = SpeedProfile(p.profile.clone());
            profile.validate().map_err(|e| invalid(format!("pedestrian {id}: {e}")))?;
            let path = match &p.waypoints {
                Some(pts) => GlobalPlan::load(&pts.iter().map(|q| v2(*q)).collect::<Vec<_>>())?,
                None => GlobalPlan::load(&offset_polyline(&plan.waypoints, p.offset))?,
            };
            pedestrians.push(Pedestrian {
                id,
                path,
                s: p.start_s,
                v: if p.follower.is_some() { 0.0 } else { profile.at(0.0) },
                profile,
                follower: p.follower,
            });
        }
        for e in &self.events {
            let ok = match e.kind {
                EventKind::Quality => (0.0..=1.0).contains(&e.value),
                EventKind::DRef => e.value > 0.0,
                _ => true,
            };
            if !ok || !(e.t >= 0.0) {
                return Err(invalid(format!("bad event at t = {}", e.t)));
            }
        }
        let mut events = self.events.clone();
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Scenario {
            name: self.name.clone(),
            seed: self.seed,
            duration: self.duration,
            stack: self.stack,
            controller: self.controller,
            grid,
            nav,
            plan,
            robot_pose: Pose2::new(self.robot.pose[0], self.robot.pose[1], self.robot.pose[2].to_radians()),
            d_ref: self.robot.d_ref,
            gains,
            pose_noise: self.robot.pose_noise,
            lidar: LidarConfig {
                range_noise: self.robot.range_noise,
                ..LidarConfig::default()
            },
            pedestrians,
            has_user: users == 1,
            events,
            expect: self.expect,
            dwa: self.dwa,
            fsm: self.fsm,
        })
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        ScenarioFile::parse(&text)?.resolve(base)
    }
}
