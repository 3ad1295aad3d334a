//! Discrete robot-user distance controllers.
//!
//! The state-feedback law `a_ref = k1 (v_ref - v_VI) + k2 (d - d°)
//! + k3 (v - v_VI) + k4 (a - a_VI) [+ k5 i]` is implemented through its
//! implicit-Euler form, which yields the speed reference directly:
//!
//! ```text
//! v_ref,k = v_VI,k + 1/(1 - k1 Ts) * ( (v_ref,k-1 - v_VI,k-1)
//!           + k2 Ts (d_k - d°) + (k3 Ts + k4)(v_k - v_VI,k)
//!           - k4 (v_k-1 - v_VI,k-1) + k5 Ts i_k )
//! i_k+1   = sat_{v_MAX / (3 |k5|)}( i_k + Ts (d_k - d°) )
//! ```
//!
//! `k5 = 0` gives the proportional controller; any nonzero `k5` adds the
//! saturated integral action.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synthesis::gains::{GainSet, GainsFile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    /// The user estimate is stale; the caller should hold `hold` and let the
    /// supervisor decide whether to stop.
    #[error("user estimate invalid; holding {hold} m/s")]
    EstimateInvalid { hold: f64 },
    #[error("invalid gains: {0}")]
    InvalidGains(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// Integral gain; zero selects the controller without integral action.
    pub k5: f64,
    pub ts: f64,
    pub v_max: f64,
}

impl DistanceGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let all = [self.k1, self.k2, self.k3, self.k4, self.k5, self.ts, self.v_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::InvalidGains("non-finite entry".into()));
        }
        if (1.0 - self.k1 * self.ts).abs() < 1e-12 {
            return Err(ControlError::InvalidGains("1 - k1 Ts must be nonzero".into()));
        }
        if self.v_max <= 0.0 || self.ts <= 0.0 {
            return Err(ControlError::InvalidGains("ts and v_max must be positive".into()));
        }
        Ok(())
    }

    pub fn from_set(set: &GainSet, ts: f64, v_max: f64) -> Self {
        Self {
            k1: set.k1,
            k2: set.k2,
            k3: set.k3,
            k4: set.k4,
            k5: set.k5,
            ts,
            v_max,
        }
    }

    /// Controller 1 (`integral = false`) or 2 from a gains file.
    pub fn from_file(file: &GainsFile, integral: bool) -> Self {
        let set = if integral {
            &file.controller2
        } else {
            &file.controller1
        };
        Self::from_set(set, file.ts, file.v_max)
    }

    /// Same gains with the integral action removed.
    pub fn without_integral(&self) -> Self {
        Self { k5: 0.0, ..*self }
    }

    /// Anti-windup bound `v_MAX / (3 |k5|)`, infinite when `k5 = 0`.
    pub fn integrator_bound(&self) -> f64 {
        if self.k5 == 0.0 {
            f64::INFINITY
        } else {
            self.v_max / (3.0 * self.k5.abs())
        }
    }
}

/// Symmetric saturation `min(max(x, -bound), bound)`.
pub fn sat(bound: f64, x: f64) -> f64 {
    x.max(-bound).min(bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerMemory {
    pub v_ref_prev: f64,
    pub v_vi_prev: f64,
    pub v_prev: f64,
    /// Integrator state [m s].
    pub integrator: f64,
    /// False right after a reset: the next step seeds the previous samples
    /// from the current measurements.
    pub seeded: bool,
}

impl ControllerMemory {
    /// Overrides the remembered reference with the one actually applied,
    /// e.g. after the velocity selector limited it.
    pub fn track_applied(&mut self, v_ref: f64) {
        self.v_ref_prev = v_ref;
    }
}

pub fn reset(_mem: ControllerMemory) -> ControllerMemory {
    ControllerMemory::default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserEstimate {
    /// Robot-user distance along the robot heading [m].
    pub d: f64,
    pub p_vi: f64,
    pub v_vi: f64,
    pub a_vi: f64,
    pub valid: bool,
    /// Time since the estimate was last refreshed [s].
    pub age: f64,
}

impl UserEstimate {
    pub const MAX_AGE: f64 = 0.5;

    pub fn invalid() -> Self {
        Self {
            d: f64::NAN,
            p_vi: f64::NAN,
            v_vi: f64::NAN,
            a_vi: f64::NAN,
            valid: false,
            age: f64::INFINITY,
        }
    }

    /// Ages the estimate by `dt`, invalidating it past [`Self::MAX_AGE`].
    pub fn aged(&self, dt: f64) -> Self {
        let age = self.age + dt;
        Self {
            age,
            valid: self.valid && age <= Self::MAX_AGE,
            ..*self
        }
    }
}

/// One controller period. Returns the unclamped `v_dist` and the next memory.
pub fn controller_step(
    gains: &DistanceGains,
    mem: ControllerMemory,
    est: &UserEstimate,
    d_ref: f64,
    v_meas: f64,
) -> Result<(f64, ControllerMemory), ControlError> {
    if !est.valid {
        return Err(ControlError::EstimateInvalid {
            hold: mem.v_ref_prev,
        });
    }
    let mem = if mem.seeded {
        mem
    } else {
        ControllerMemory {
            v_ref_prev: v_meas,
            v_vi_prev: est.v_vi,
            v_prev: v_meas,
            integrator: mem.integrator,
            seeded: true,
        }
    };
    let ts = gains.ts;
    let err = est.d - d_ref;
    let correction = (mem.v_ref_prev - mem.v_vi_prev)
        + gains.k2 * ts * err
        + (gains.k3 * ts + gains.k4) * (v_meas - est.v_vi)
        - gains.k4 * (mem.v_prev - mem.v_vi_prev)
        + gains.k5 * ts * mem.integrator;
    let v_dist = est.v_vi + correction / (1.0 - gains.k1 * ts);
    let integrator = if gains.k5 != 0.0 {
        sat(gains.integrator_bound(), mem.integrator + ts * err)
    } else {
        mem.integrator
    };
    Ok((
        v_dist,
        ControllerMemory {
            v_ref_prev: v_dist,
            v_vi_prev: est.v_vi,
            v_prev: v_meas,
            integrator,
            seeded: true,
        },
    ))
}
