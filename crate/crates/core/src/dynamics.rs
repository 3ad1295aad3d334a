//! Switched longitudinal model of the robot base.
//!
//! The base speed loop is identified as two second-order transfer functions
//! from the speed reference `v_ref` to the measured speed `v`,
//!
//! ```text
//!   F_i(s) = (1 + T_i s) / (1 + alpha_i s + beta_i s^2),   i in {acc, dec}
//! ```
//!
//! one active while accelerating and one while decelerating. Both have a
//! right-half-plane zero (`T_i < 0`). Taking the reference acceleration
//! `u = d v_ref / dt` as the input gives the four-state realization
//! `x = [v_ref, p, v, a]` used for synthesis; [`discretize`] turns it into the
//! sampled pair `(A_i, B_i)` by exact zero-order hold.
//!
//! [`plant_step`] is the fine-grained ground-truth integrator used by the
//! simulator. It also carries the planar pose and a first-order yaw-rate lag.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid integration step dt = {0}")]
    InvalidStep(f64),
}

/// Number of longitudinal states, ordered `[v_ref, p, v, a]`.
pub const STATE_DIM: usize = 4;

/// Coefficients of one operating mode's transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// First-order denominator coefficient [s].
    pub alpha: f64,
    /// Second-order denominator coefficient [s^2].
    pub beta: f64,
    /// Numerator coefficient [s]; negative for a non-minimum-phase zero.
    pub zero_t: f64,
}

impl ModeParams {
    /// Identified accelerating mode.
    pub const ACC: ModeParams = ModeParams {
        alpha: 2.3728,
        beta: 0.9681,
        zero_t: -0.3423,
    };

    /// Identified decelerating mode.
    pub const DEC: ModeParams = ModeParams {
        alpha: 0.6187,
        beta: 0.2059,
        zero_t: -0.4255,
    };

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.zero_t.is_finite()) {
            return Err(DynamicsError::InvalidModel(format!(
                "non-finite mode parameters {self:?}"
            )));
        }
        if self.beta <= 0.0 || self.alpha <= 0.0 {
            return Err(DynamicsError::InvalidModel(format!(
                "alpha and beta must be positive, got {self:?}"
            )));
        }
        if self.zero_t == 0.0 {
            return Err(DynamicsError::InvalidModel("zero_t must be nonzero".into()));
        }
        Ok(())
    }

    /// Roots of `beta s^2 + alpha s + 1` as `(re, im)` pairs.
    pub fn continuous_poles(&self) -> [(f64, f64); 2] {
        let disc = self.alpha * self.alpha - 4.0 * self.beta;
        let two_beta = 2.0 * self.beta;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            [
                ((-self.alpha + sq) / two_beta, 0.0),
                ((-self.alpha - sq) / two_beta, 0.0),
            ]
        } else {
            let sq = (-disc).sqrt();
            [
                (-self.alpha / two_beta, sq / two_beta),
                (-self.alpha / two_beta, -sq / two_beta),
            ]
        }
    }

    /// Time derivative of `[v_ref, p, v, a]` under input `u = d v_ref/dt`.
    fn derivative(&self, x: &[f64; 4], u: f64) -> [f64; 4] {
        let [v_ref, _p, v, a] = *x;
        [
            u,
            v,
            a,
            (-self.alpha * a - v + v_ref + self.zero_t * u) / self.beta,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Acc,
    Dec,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Acc => "acc",
            Mode::Dec => "dec",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchedLongitudinalModel {
    pub acc: ModeParams,
    pub dec: ModeParams,
    /// Controller sampling time [s].
    pub ts: f64,
}

impl Default for SwitchedLongitudinalModel {
    fn default() -> Self {
        Self {
            acc: ModeParams::ACC,
            dec: ModeParams::DEC,
            ts: 0.1,
        }
    }
}

impl SwitchedLongitudinalModel {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        self.acc.validate()?;
        self.dec.validate()?;
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(DynamicsError::InvalidModel(format!(
                "sampling time must be positive, got {}",
                self.ts
            )));
        }
        if self.acc == self.dec {
            return Err(DynamicsError::InvalidModel(
                "acceleration and deceleration modes coincide".into(),
            ));
        }
        Ok(())
    }

    pub fn mode(&self, mode: Mode) -> &ModeParams {
        match mode {
            Mode::Acc => &self.acc,
            Mode::Dec => &self.dec,
        }
    }
}

/// Longitudinal state `x = [v_ref, p, v, a]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LongitudinalState {
    /// Internal reference state [m/s].
    pub v_ref: f64,
    /// Curvilinear abscissa [m].
    pub p: f64,
    /// Robot speed [m/s].
    pub v: f64,
    /// Robot acceleration [m/s^2].
    pub a: f64,
}

impl LongitudinalState {
    pub fn to_array(&self) -> [f64; 4] {
        [self.v_ref, self.p, self.v, self.a]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        Self {
            v_ref: x[0],
            p: x[1],
            v: x[2],
            a: x[3],
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }
}

/// Sampled `(A, B)` of one mode; `A` is `n x n`, `B` is `n x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMode {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl DiscreteMode {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModePair {
    pub acc: DiscreteMode,
    pub dec: DiscreteMode,
    pub ts: f64,
}

impl DiscreteModePair {
    pub fn modes(&self) -> [(Mode, &DiscreteMode); 2] {
        [(Mode::Acc, &self.acc), (Mode::Dec, &self.dec)]
    }

    /// Appends a discrete integrator of the distance error, `i+ = i + Ts x_2`.
    pub fn with_distance_integrator(&self) -> DiscreteModePair {
        let augment = |m: &DiscreteMode| {
            let n = m.n();
            let mut a = DMatrix::zeros(n + 1, n + 1);
            a.view_mut((0, 0), (n, n)).copy_from(&m.a);
            a[(n, 1)] = self.ts;
            a[(n, n)] = 1.0;
            let mut b = DMatrix::zeros(n + 1, 1);
            b.view_mut((0, 0), (n, 1)).copy_from(&m.b);
            DiscreteMode { a, b }
        };
        DiscreteModePair {
            acc: augment(&self.acc),
            dec: augment(&self.dec),
            ts: self.ts,
        }
    }
}

/// Continuous-time `(A_c, B_c)` of one mode in the `[v_ref, p, v, a]` realization.
pub fn continuous_matrices(mode: &ModeParams) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
    mode.validate()?;
    let mut a = DMatrix::zeros(STATE_DIM, STATE_DIM);
    a[(1, 2)] = 1.0;
    a[(2, 3)] = 1.0;
    a[(3, 0)] = 1.0 / mode.beta;
    a[(3, 2)] = -1.0 / mode.beta;
    a[(3, 3)] = -mode.alpha / mode.beta;
    let b = DMatrix::from_column_slice(STATE_DIM, 1, &[1.0, 0.0, 0.0, mode.zero_t / mode.beta]);
    Ok((a, b))
}

/// Exact zero-order-hold discretization of `(A_c, B_c)` over `ts`.
///
/// Uses the block exponential `exp([[A, B], [0, 0]] ts) = [[A_d, B_d], [0, I]]`.
pub fn zoh(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, ts: f64) -> DiscreteMode {
    let n = a_c.nrows();
    let m = b_c.ncols();
    let mut block = DMatrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&(a_c * ts));
    block.view_mut((0, n), (n, m)).copy_from(&(b_c * ts));
    let e = block.exp();
    DiscreteMode {
        a: e.view((0, 0), (n, n)).into_owned(),
        b: e.view((0, n), (n, m)).into_owned(),
    }
}

pub fn discretize(model: &SwitchedLongitudinalModel) -> Result<DiscreteModePair, DynamicsError> {
    model.validate()?;
    let (a_acc, b_acc) = continuous_matrices(&model.acc)?;
    let (a_dec, b_dec) = continuous_matrices(&model.dec)?;
    Ok(DiscreteModePair {
        acc: zoh(&a_acc, &b_acc, model.ts),
        dec: zoh(&a_dec, &b_dec, model.ts),
        ts: model.ts,
    })
}

/// Full ground-truth state of the simulated base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub long: LongitudinalState,
    pub pose: Pose2,
    /// Actual yaw rate [rad/s].
    pub omega: f64,
    pub mode: Mode,
}

impl PlantState {
    pub fn at_rest(pose: Pose2) -> Self {
        Self {
            long: LongitudinalState::default(),
            pose,
            omega: 0.0,
            mode: Mode::Acc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantCommand {
    pub v_ref: f64,
    pub omega_ref: f64,
}

/// Plant-side constants that are not part of the identified model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Mode-switch hysteresis on `v_ref - v` [m/s].
    pub hysteresis: f64,
    /// Yaw-rate lag time constant [s].
    pub yaw_tau: f64,
    /// Largest admissible integration step [s].
    pub max_dt: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            hysteresis: 0.02,
            yaw_tau: 0.3,
            max_dt: 1e-3,
        }
    }
}

fn select_mode(previous: Mode, v_ref_cmd: f64, v: f64, h: f64) -> Mode {
    if v_ref_cmd > v + h {
        Mode::Acc
    } else if v_ref_cmd < v - h {
        Mode::Dec
    } else {
        previous
    }
}

/// Advances the plant by `dt` under a held command.
///
/// A change of the speed reference is applied as a step: the zero of the
/// transfer function turns it into an impulse on `a` of size
/// `(T_i / beta_i) * delta_v_ref`, after which the state is integrated with
/// RK4 at zero reference acceleration.
pub fn plant_step(
    model: &SwitchedLongitudinalModel,
    cfg: &PlantConfig,
    state: &PlantState,
    cmd: PlantCommand,
    dt: f64,
) -> Result<PlantState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) || dt > cfg.max_dt * (1.0 + 1e-9) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let mode = select_mode(state.mode, cmd.v_ref, state.long.v, cfg.hysteresis);
    let params = model.mode(mode);
    let mut long = state.long;
    let jump = cmd.v_ref - long.v_ref;
    if jump != 0.0 {
        long.a += params.zero_t / params.beta * jump;
        long.v_ref = cmd.v_ref;
    }

    // [v_ref, p, v, a, x, y, theta, omega]
    let f = |s: &[f64; 8]| -> [f64; 8] {
        let dl = params.derivative(&[s[0], s[1], s[2], s[3]], 0.0);
        [
            dl[0],
            dl[1],
            dl[2],
            dl[3],
            s[2] * s[6].cos(),
            s[2] * s[6].sin(),
            s[7],
            (cmd.omega_ref - s[7]) / cfg.yaw_tau,
        ]
    };
    let s0 = [
        long.v_ref,
        long.p,
        long.v,
        long.a,
        state.pose.x,
        state.pose.y,
        state.pose.theta,
        state.omega,
    ];
    let s1 = rk4(f, &s0, dt);
    Ok(PlantState {
        long: LongitudinalState::from_array([s1[0], s1[1], s1[2], s1[3]]),
        pose: Pose2::new(s1[4], s1[5], s1[6]),
        omega: s1[7],
        mode,
    })
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4<const N: usize>(f: impl Fn(&[f64; N]) -> [f64; N], x: &[f64; N], h: f64) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * k[i];
        }
        out
    };
    let k1 = f(x);
    let k2 = f(&axpy(x, &k1, h / 2.0));
    let k3 = f(&axpy(x, &k2, h / 2.0));
    let k4 = f(&axpy(x, &k3, h));
    let mut out = *x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}
