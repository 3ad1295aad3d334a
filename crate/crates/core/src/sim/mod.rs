//! Deterministic closed-loop simulator: world, scripted pedestrians,
//! synthetic LiDAR and the control tick that wires the stack together.

pub mod log;
pub mod pedestrian;
pub mod scenario;
pub mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::distance_control::{
    controller_step, reset, ControlError, ControllerMemory, DistanceGains, UserEstimate,
};
use crate::dynamics::{plant_step, DynamicsError, PlantCommand, PlantConfig, PlantState, SwitchedLongitudinalModel};
use crate::geometry::{Pose2, Vec2};
use crate::perception::{detect_people, Tracker, TrackerConfig, UserSelector};
use crate::planning::costmap::{Costmap, CostmapConfig};
use crate::planning::dwa::plan_step;
use crate::supervision::{Supervisor, SupervisorInputs, VelocityCommand};
use crate::synthesis::gains::{design_gains, DesignWeights, GainsFile};
use crate::synthesis::SynthesisError;

pub use log::{compute_metrics, Metrics, TickLog};
pub use scenario::{Scenario, ScenarioError, ScenarioFile, Stack};
use world::{footprint_distance, footprint_in_collision, raycast, PEDESTRIAN_RADIUS};

/// Control period [s].
pub const TS: f64 = 0.1;
/// Plant integration step [s].
pub const PLANT_DT: f64 = 1e-3;
pub const FOOTPRINT_HALF: f64 = 0.3;
/// Remaining plan length at which the goal counts as reached [m].
pub const GOAL_TOLERANCE: f64 = 0.5;
pub const POSE_NOISE_XY: f64 = 0.03;
pub const POSE_NOISE_DEG: f64 = 0.5;
/// FSM code logged when the supervisor is bypassed.
pub const BYPASS_CODE: u8 = 5;
pub const BYPASS_NAME: &str = "BYPASS";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("plant: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("distance controller: {0}")]
    Control(#[from] ControlError),
    #[error("gain synthesis: {0}")]
    Synthesis(#[from] SynthesisError),
}

pub struct Simulation {
    pub scenario: Scenario,
    gains: DistanceGains,
    model: SwitchedLongitudinalModel,
    plant_cfg: PlantConfig,
    pub plant: PlantState,
    pub pedestrians: Vec<pedestrian::Pedestrian>,
    rng: ChaCha8Rng,
    pub tracker: Tracker,
    selector: UserSelector,
    pub costmap: Costmap,
    pub supervisor: Supervisor,
    mem: ControllerMemory,
    last_est: UserEstimate,
    last_cmd: VelocityCommand,
    s: f64,
    d_ref: f64,
    quality: f64,
    next_event: usize,
    tick: usize,
    collisions: u32,
    in_collision: bool,
    distance_field: Vec<f64>,
}

/// Default gain design, used when the scenario names no gains file.
pub fn default_gains() -> Result<GainsFile, SynthesisError> {
    design_gains(&SwitchedLongitudinalModel::default(), &DesignWeights::default(), log::SPEED_CAP)
}

impl Simulation {
    pub fn new(scenario: Scenario, gains: Option<GainsFile>) -> Result<Self, SimError> {
        let file = match gains.or_else(|| scenario.gains.clone()) {
            Some(g) => g,
            None => default_gains()?,
        };
        let gains = DistanceGains::from_file(&file, scenario.controller == 2);
        gains.validate()?;
        let pose = scenario.robot_pose;
        let s = scenario.plan.project(pose.position()).s;
        let mut supervisor = Supervisor::new(scenario.fsm);
        supervisor.config.v_max = scenario.dwa.v_max;
        Ok(Self {
            gains,
            model: SwitchedLongitudinalModel::default(),
            plant_cfg: PlantConfig::default(),
            plant: PlantState::at_rest(pose),
            pedestrians: scenario.pedestrians.clone(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            tracker: Tracker::new(TrackerConfig::default()),
            selector: UserSelector::default(),
            costmap: Costmap::new(CostmapConfig::default()),
            supervisor,
            mem: ControllerMemory::default(),
            last_est: UserEstimate::invalid(),
            last_cmd: VelocityCommand::STOP,
            s,
            d_ref: scenario.d_ref,
            quality: 1.0,
            next_event: 0,
            tick: 0,
            collisions: 0,
            in_collision: false,
            distance_field: scenario.grid.distance_field(),
            scenario,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * TS
    }

    pub fn finished(&self) -> bool {
        self.time() >= self.scenario.duration - 1e-9
    }

    fn estimated_pose(&mut self) -> Pose2 {
        let p = self.plant.pose;
        if !self.scenario.pose_noise {
            return p;
        }
        let xy = Normal::new(0.0, POSE_NOISE_XY).expect("finite sigma");
        let th = Normal::new(0.0, POSE_NOISE_DEG.to_radians()).expect("finite sigma");
        Pose2::new(
            p.x + xy.sample(&mut self.rng),
            p.y + xy.sample(&mut self.rng),
            p.theta + th.sample(&mut self.rng),
        )
    }

    fn clearance(&self) -> f64 {
        let g = &self.scenario.grid;
        let c = (self.plant.pose.position() - g.origin) / g.resolution;
        let (i, j) = (c.x.floor(), c.y.floor());
        if i < 0.0 || j < 0.0 || i >= g.width as f64 || j >= g.height as f64 {
            return f64::INFINITY;
        }
        self.distance_field[j as usize * g.width + i as usize]
    }

    /// Runs one control period and returns its log record.
    pub fn step(&mut self) -> Result<TickLog, SimError> {
        let t = self.time();
        let mut ack = false;
        let mut stop = false;
        while let Some(e) = self.scenario.events.get(self.next_event) {
            if e.t > t + 1e-9 {
                break;
            }
            match e.kind {
                scenario::EventKind::ManualAck => ack = true,
                scenario::EventKind::ManualStop => stop = true,
                scenario::EventKind::Quality => self.quality = e.value,
                scenario::EventKind::DRef => self.d_ref = e.value,
            }
            self.next_event += 1;
        }

        // Sense.
        let pose = self.estimated_pose();
        let ped_pos: Vec<Vec2> = self.pedestrians.iter().map(|p| p.position()).collect();
        let scan = raycast(
            &self.scenario.grid,
            &ped_pos,
            &self.plant.pose,
            pose,
            &self.scenario.lidar,
            t,
            &mut self.rng,
        );
        let detections = detect_people(&scan);
        self.tracker.update(&detections, TS);
        let selection = self.selector.update(self.tracker.published(), &pose, self.d_ref, TS);
        let plan = &self.scenario.plan;
        self.s = plan.project_near(pose.position(), self.s, 2.0).s;

        // Distance control.
        let est = match &selection {
            Some(sel) => sel.estimate(self.s),
            None => self.last_est.aged(TS),
        };
        self.last_est = est;
        let v_meas = self.plant.long.v;
        let v_dist = match controller_step(&self.gains, self.mem, &est, self.d_ref, v_meas) {
            Ok((v, mem)) => {
                self.mem = mem;
                v
            }
            Err(ControlError::EstimateInvalid { hold }) => hold,
            Err(e) => return Err(e.into()),
        };

        // Plan and supervise.
        let (cmd, v_dwa, omega_dwa, code, name) = match self.scenario.stack {
            Stack::DistanceOnly => {
                let v_max = self.gains.v_max;
                let cmd = VelocityCommand {
                    v_ref: v_dist.clamp(-v_max, v_max),
                    omega_ref: 0.0,
                };
                (cmd, f64::NAN, f64::NAN, BYPASS_CODE, BYPASS_NAME)
            }
            Stack::Full => {
                let points = scan.obstacle_points();
                self.costmap.update(&points, self.scenario.nav.as_ref(), &pose);
                let dwa = plan_step(
                    &self.scenario.dwa,
                    &self.costmap,
                    plan,
                    &pose,
                    self.last_cmd.v_ref,
                    self.last_cmd.omega_ref,
                    self.s,
                );
                let inputs = SupervisorInputs {
                    v_dwa: dwa.v,
                    omega_dwa: dwa.omega,
                    planner_feasible: dwa.feasible && dwa.moving_arc,
                    v_dist,
                    user_distance: selection.map(|s| s.d),
                    localization_quality: self.quality,
                    manual_ack: ack,
                    manual_stop: stop,
                    goal_reached: plan.length() - self.s < GOAL_TOLERANCE,
                    v_robot: v_meas,
                    v_user: selection.map_or(0.0, |s| s.v_vi),
                };
                let (cmd, _) = self.supervisor.step(&inputs, TS);
                let state = self.supervisor.state;
                if state.is_stop() {
                    self.mem = reset(self.mem);
                }
                (cmd, dwa.v, dwa.omega, state.code(), state.name())
            }
        };
        self.mem.track_applied(cmd.v_ref);
        self.last_cmd = cmd;

        // Ground truth for the log.
        let true_pose = self.plant.pose;
        let user = self.scenario.has_user.then(|| &self.pedestrians[0]);
        let d_true = user.map_or(f64::NAN, |u| -true_pose.to_local(u.position()).x);
        let v_vi_true = user.map_or(f64::NAN, |u| u.velocity().dot(&true_pose.heading()));
        let selected_ped = selection.map_or(-1, |sel| {
            ped_pos
                .iter()
                .enumerate()
                .map(|(k, p)| (k, (p - sel.position).norm()))
                .filter(|(_, d)| *d < 1.0)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(-1, |(k, _)| k as i64)
        });
        let n_peds_tracked = self
            .pedestrians
            .iter()
            .filter(|p| {
                self.tracker.published().any(|tr| {
                    (tr.position() - p.position()).norm() < 0.5 && (tr.velocity() - p.velocity()).norm() < 0.3
                })
            })
            .count() as u32;
        let clearance = self.clearance();

        // Advance the world.
        let plant_cmd = PlantCommand {
            v_ref: cmd.v_ref,
            omega_ref: cmd.omega_ref,
        };
        let sub = (TS / PLANT_DT).round() as usize;
        for _ in 0..sub {
            self.plant = plant_step(&self.model, &self.plant_cfg, &self.plant, plant_cmd, PLANT_DT)?;
        }
        let robot = self.plant.pose.position();
        for p in &mut self.pedestrians {
            p.step(t, TS, robot);
        }
        let hit = footprint_in_collision(&self.scenario.grid, self.scenario.nav.as_ref(), &self.plant.pose, FOOTPRINT_HALF)
            || self
                .pedestrians
                .iter()
                .any(|p| footprint_distance(&self.plant.pose, FOOTPRINT_HALF, p.position()) < PEDESTRIAN_RADIUS);
        if hit && !self.in_collision {
            self.collisions += 1;
        }
        self.in_collision = hit;
        self.tick += 1;

        Ok(TickLog {
            t,
            d: d_true,
            d_est: selection.map_or(f64::NAN, |s| s.d),
            d_ref: self.d_ref,
            v: v_meas,
            v_ref: cmd.v_ref,
            v_dist,
            v_dwa,
            omega_dwa,
            v_vi_est: selection.map_or(f64::NAN, |s| s.v_vi),
            v_vi_true,
            omega_ref: cmd.omega_ref,
            fsm_code: code,
            fsm_state: name.to_string(),
            clearance,
            tether_stretch: d_true - self.d_ref,
            track_id: selection.map_or(-1, |s| s.track_id as i64),
            selected_ped,
            n_peds_tracked,
            collisions: self.collisions,
            s: self.s,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: Vec<TickLog>,
    pub metrics: Metrics,
    /// Unmet scenario expectations, one message each.
    pub failures: Vec<String>,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.metrics.collisions == 0 && self.failures.is_empty()
    }
}

/// Checks the scenario's `[expect]` table against the metrics.
pub fn check_expectations(scenario: &Scenario, m: &Metrics) -> Vec<String> {
    let e = &scenario.expect;
    let mut out = Vec::new();
    let mut check = |name: &str, limit: Option<f64>, value: f64| {
        if let Some(l) = limit {
            if !(value <= l) {
                out.push(format!("{name} = {value:.4} exceeds {l}"));
            }
        }
    };
    check("max_abs_error", e.max_abs_error, m.max_abs_error);
    check("steady_state_error", e.steady_state_error, m.max_steady_state_error);
    check("settling_time", e.settling_time, m.max_settling_time.unwrap_or(f64::INFINITY));
    check("max_overshoot", e.max_overshoot, m.max_overshoot);
    if e.reach_goal == Some(true) && m.final_s < scenario.plan.length() - 2.0 * GOAL_TOLERANCE {
        out.push(format!("goal not reached: s = {:.2} of {:.2}", m.final_s, scenario.plan.length()));
    }
    if e.no_wrong_selection == Some(true) && m.wrong_selection_ticks > 0 {
        out.push(format!("{} ticks selected someone other than the user", m.wrong_selection_ticks));
    }
    if m.collisions > 0 {
        out.push(format!("{} collisions", m.collisions));
    }
    out
}

/// Runs a scenario to completion.
pub fn run_scenario(scenario: Scenario, gains: Option<GainsFile>) -> Result<RunResult, SimError> {
    let mut sim = Simulation::new(scenario, gains)?;
    let mut log = Vec::with_capacity((sim.scenario.duration / TS).ceil() as usize);
    while !sim.finished() {
        log.push(sim.step()?);
    }
    let metrics = compute_metrics(&log);
    let failures = check_expectations(&sim.scenario, &metrics);
    Ok(RunResult { log, metrics, failures })
}
