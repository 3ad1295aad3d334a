//! Gains file: the synthesized controller gains with the weights and solver
//! residuals that produced them, serialized as TOML.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    synthesize, synthesize_integral, PerformanceSpec, SynthesisError, SynthesisSolution,
    DEFAULT_TOL,
};
use crate::dynamics::{discretize, SwitchedLongitudinalModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub block: String,
    pub margin: f64,
}

/// One controller's gains `k1..k5` (`k5 = 0` for the controller without
/// integral action) plus its synthesis diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    /// Achieved `trace(S)`.
    pub cost: f64,
    pub spectral_radius_acc: f64,
    pub spectral_radius_dec: f64,
    pub residuals: Vec<Residual>,
}

impl GainSet {
    pub fn from_solution(sol: &SynthesisSolution, modes: &crate::dynamics::DiscreteModePair) -> Self {
        let k = sol.gains();
        let get = |i: usize| k.get(i).copied().unwrap_or(0.0);
        let augmented;
        let modes = if k.len() == modes.acc.n() + 1 {
            augmented = modes.with_distance_integrator();
            &augmented
        } else {
            modes
        };
        let radii = sol.spectral_radii(modes);
        Self {
            k1: get(0),
            k2: get(1),
            k3: get(2),
            k4: get(3),
            k5: get(4),
            cost: sol.cost,
            spectral_radius_acc: radii[0].1,
            spectral_radius_dec: radii[1].1,
            residuals: sol
                .residuals
                .iter()
                .map(|r| Residual {
                    block: r.block.clone(),
                    margin: r.margin,
                })
                .collect(),
        }
    }

    pub fn k(&self) -> [f64; 5] {
        [self.k1, self.k2, self.k3, self.k4, self.k5]
    }

    pub fn inf_norm(&self) -> f64 {
        self.k().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsFile {
    /// Controller sampling time [s].
    pub ts: f64,
    /// Speed cap used by the integrator saturation [m/s].
    pub v_max: f64,
    pub model: SwitchedLongitudinalModel,
    /// State weight of the four-state design, row by row.
    pub q4: Vec<Vec<f64>>,
    /// State weight of the integrator-augmented design.
    pub q5: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub controller1: GainSet,
    pub controller2: GainSet,
}

#[derive(Debug, thiserror::Error)]
pub enum GainsFileError {
    #[error("reading gains file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing gains file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("writing gains file: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid gains file: {0}")]
    Invalid(String),
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Design inputs for [`design_gains`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignWeights {
    pub q4: Vec<f64>,
    pub integrator_weight: f64,
    pub r: f64,
}

impl Default for DesignWeights {
    fn default() -> Self {
        Self {
            q4: super::DEFAULT_Q4.to_vec(),
            integrator_weight: super::DEFAULT_INTEGRATOR_WEIGHT,
            r: super::DEFAULT_R,
        }
    }
}

/// Runs both designs (with and without integral action) for `model`.
pub fn design_gains(
    model: &SwitchedLongitudinalModel,
    weights: &DesignWeights,
    v_max: f64,
) -> Result<GainsFile, SynthesisError> {
    let modes = discretize(model).map_err(|e| SynthesisError::Construction(e.to_string()))?;
    let perf4 = PerformanceSpec::diagonal(&weights.q4, weights.r)?;
    let mut q5 = weights.q4.clone();
    q5.push(weights.integrator_weight);
    let perf5 = PerformanceSpec::diagonal(&q5, weights.r)?;
    let sol4 = synthesize(&modes, &perf4, DEFAULT_TOL)?;
    let sol5 = synthesize_integral(&modes, &perf5, DEFAULT_TOL)?;
    Ok(GainsFile {
        ts: model.ts,
        v_max,
        model: *model,
        q4: rows(&perf4.q),
        q5: rows(&perf5.q),
        r: rows(&perf4.r),
        controller1: GainSet::from_solution(&sol4, &modes),
        controller2: GainSet::from_solution(&sol5, &modes),
    })
}

impl GainsFile {
    pub fn to_toml(&self) -> Result<String, GainsFileError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, GainsFileError> {
        let file: GainsFile = toml::from_str(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), GainsFileError> {
        if !(self.ts > 0.0) || !(self.v_max > 0.0) {
            return Err(GainsFileError::Invalid("ts and v_max must be positive".into()));
        }
        for (name, g) in [("controller1", &self.controller1), ("controller2", &self.controller2)] {
            if g.k().iter().any(|v| !v.is_finite()) {
                return Err(GainsFileError::Invalid(format!("{name} has non-finite gains")));
            }
            if (1.0 - g.k1 * self.ts).abs() < 1e-12 {
                return Err(GainsFileError::Invalid(format!("{name}: 1 - k1 Ts is zero")));
            }
        }
        if self.controller1.k5 != 0.0 {
            return Err(GainsFileError::Invalid("controller1 must have k5 = 0".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), GainsFileError> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GainsFileError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
