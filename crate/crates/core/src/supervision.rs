//! Velocity mixing between planner and distance controller, and the
//! supervisory state machine that gates the final command.

use serde::{Deserialize, Serialize};

/// Below this planner speed the command is forced to a full stop [m/s].
pub const V_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v_ref: f64,
    pub omega_ref: f64,
}

impl VelocityCommand {
    pub const STOP: Self = Self {
        v_ref: 0.0,
        omega_ref: 0.0,
    };
}

/// Takes the slower of the two speeds and keeps the planner's curvature.
pub fn select_velocity(v_dwa: f64, omega_dwa: f64, v_dist: f64, v_max: f64) -> VelocityCommand {
    if v_dwa < V_EPS {
        return VelocityCommand::STOP;
    }
    let v_dist = v_dist.clamp(0.0, v_max);
    if v_dist < v_dwa {
        VelocityCommand {
            v_ref: v_dist,
            omega_ref: (v_dist / v_dwa).abs() * omega_dwa,
        }
    } else {
        VelocityCommand {
            v_ref: v_dwa,
            omega_ref: omega_dwa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmState {
    Lost,
    StoppedHuman,
    StoppedRobot,
    Cruise,
    LowSpeed,
}

impl FsmState {
    pub const ALL: [FsmState; 5] = [
        FsmState::Lost,
        FsmState::StoppedHuman,
        FsmState::StoppedRobot,
        FsmState::Cruise,
        FsmState::LowSpeed,
    ];

    pub fn code(self) -> u8 {
        match self {
            FsmState::Lost => 0,
            FsmState::StoppedHuman => 1,
            FsmState::StoppedRobot => 2,
            FsmState::Cruise => 3,
            FsmState::LowSpeed => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FsmState::Lost => "LOST",
            FsmState::StoppedHuman => "STOPPED_HUMAN",
            FsmState::StoppedRobot => "STOPPED_ROBOT",
            FsmState::Cruise => "CRUISE",
            FsmState::LowSpeed => "LOW_SPEED",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn is_stop(self) -> bool {
        matches!(self, FsmState::Lost | FsmState::StoppedHuman | FsmState::StoppedRobot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsmConfig {
    pub quality_threshold: f64,
    /// Dwell below the quality threshold before T1 [s].
    pub lost_after: f64,
    /// Dwell at or above the threshold before T2 [s].
    pub recover_after: f64,
    /// Time without a user track before T5 [s].
    pub user_lost_after: f64,
    pub max_user_distance: f64,
    /// Time without a moving plan before T6 [s].
    pub stuck_after: f64,
    /// Speed both robot and user must exceed for T4 [m/s].
    pub cruise_speed: f64,
    pub v_max: f64,
}

impl Default for FsmConfig {
    fn default() -> Self {
        Self {
            quality_threshold: 0.5,
            lost_after: 0.5,
            recover_after: 1.0,
            user_lost_after: 1.0,
            max_user_distance: 3.5,
            stuck_after: 2.0,
            cruise_speed: 0.3,
            v_max: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SupervisorInputs {
    pub v_dwa: f64,
    pub omega_dwa: f64,
    pub planner_feasible: bool,
    pub v_dist: f64,
    /// Distance to the selected user, `None` without a selection.
    pub user_distance: Option<f64>,
    pub localization_quality: f64,
    pub manual_ack: bool,
    pub manual_stop: bool,
    pub goal_reached: bool,
    pub v_robot: f64,
    pub v_user: f64,
}

/// Named transitions, for logs and conformance tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supervisor {
    pub config: FsmConfig,
    pub state: FsmState,
    pub low_quality_time: f64,
    pub good_quality_time: f64,
    pub user_missing_time: f64,
    pub infeasible_time: f64,
}

const DWELL_EPS: f64 = 1e-9;

impl Supervisor {
    pub fn new(config: FsmConfig) -> Self {
        Self {
            config,
            state: FsmState::StoppedHuman,
            low_quality_time: 0.0,
            good_quality_time: 0.0,
            user_missing_time: 0.0,
            infeasible_time: 0.0,
        }
    }

    fn update_timers(&mut self, inp: &SupervisorInputs, dt: f64) {
        let good = inp.localization_quality >= self.config.quality_threshold;
        self.low_quality_time = if good { 0.0 } else { self.low_quality_time + dt };
        self.good_quality_time = if good { self.good_quality_time + dt } else { 0.0 };
        self.user_missing_time = if inp.user_distance.is_some() {
            0.0
        } else {
            self.user_missing_time + dt
        };
        self.infeasible_time = if inp.planner_feasible {
            0.0
        } else {
            self.infeasible_time + dt
        };
    }

    fn transition(&self, inp: &SupervisorInputs) -> Option<(Transition, FsmState)> {
        use FsmState::*;
        let c = &self.config;
        if self.state != Lost && self.low_quality_time >= c.lost_after - DWELL_EPS {
            return Some((Transition::T1, Lost));
        }
        match self.state {
            Lost => (self.good_quality_time >= c.recover_after - DWELL_EPS).then_some((Transition::T2, StoppedHuman)),
            StoppedHuman => inp.manual_ack.then_some((Transition::T3, LowSpeed)),
            Cruise | LowSpeed | StoppedRobot => {
                let user_gone = self.user_missing_time > c.user_lost_after + DWELL_EPS
                    || inp.user_distance.is_some_and(|d| d > c.max_user_distance);
                if user_gone || inp.manual_stop || inp.goal_reached {
                    return Some((Transition::T5, StoppedHuman));
                }
                match self.state {
                    StoppedRobot => inp.planner_feasible.then_some((Transition::T7, Cruise)),
                    _ if self.infeasible_time >= c.stuck_after - DWELL_EPS => Some((Transition::T6, StoppedRobot)),
                    LowSpeed if inp.v_robot > c.cruise_speed && inp.v_user > c.cruise_speed => {
                        Some((Transition::T4, Cruise))
                    }
                    _ => None,
                }
            }
        }
    }

    /// Advances timers, applies at most one transition and returns the
    /// command of the resulting state.
    pub fn step(&mut self, inp: &SupervisorInputs, dt: f64) -> (VelocityCommand, Option<Transition>) {
        self.update_timers(inp, dt);
        let fired = self.transition(inp);
        if let Some((_, next)) = fired {
            self.state = next;
        }
        (self.output(inp), fired.map(|(t, _)| t))
    }

    pub fn output(&self, inp: &SupervisorInputs) -> VelocityCommand {
        let c = &self.config;
        match self.state {
            FsmState::Lost | FsmState::StoppedHuman | FsmState::StoppedRobot => VelocityCommand::STOP,
            FsmState::LowSpeed => VelocityCommand {
                v_ref: inp.v_dwa.clamp(0.0, c.v_max),
                omega_ref: inp.omega_dwa,
            },
            FsmState::Cruise => select_velocity(inp.v_dwa, inp.omega_dwa, inp.v_dist, c.v_max),
        }
    }
}

impl Default for Supervisor {
    fn default() -> Self {
        Self::new(FsmConfig::default())
    }
}
