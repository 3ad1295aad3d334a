//! Robust H2 state-feedback synthesis for the two-mode switched model.
//!
//! For `x+ = A_i x + B_i u`, `u = K x` and performance output
//! `z = C_p x + D_p u`, a common `P` and the change of variables `L = K P`
//! turn the H2 bound into the LMI program
//!
//! ```text
//!   min trace(S)
//!   [[S, C_p P + D_p L], [(.)^T, P]]                                  >= 0
//!   [[P - A_i P A_i^T - A_i L^T B_i^T - B_i L A_i^T - I, B_i L],
//!    [L^T B_i^T, P]]                                                  > 0   (each mode)
//!   P                                                                 > 0
//! ```
//!
//! with `C_p = [sqrt(Q); 0]`, `D_p = [0; sqrt(R)]`. The gain is recovered as
//! `K = L P^-1`. Strict inequalities are enforced with a margin of `1e-8`.

pub mod gains;
pub mod sdp;
mod verify;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{DiscreteModePair, Mode};
use crate::linalg::{min_eigenvalue, psd_sqrt, spectral_radius, symmetrize};

pub use sdp::{LmiBlock, SdpOptions, SdpProblem, SdpSolution, VarLayout, VarShape};
pub use verify::{verify_gain, verify_solution, VerificationReport, Violation};

/// Margin used for the strict LMIs.
pub const STRICT_MARGIN: f64 = 1e-8;

/// Default solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("problem construction failed: {0}")]
    Construction(String),
    #[error("LMIs infeasible (phase-I slack {slack:.3e}); block margins {residuals:?}")]
    Infeasible {
        slack: f64,
        residuals: Vec<(String, f64)>,
    },
    #[error("barrier method did not converge (gap {gap:.3e}); block margins {residuals:?}")]
    NotConverged {
        gap: f64,
        residuals: Vec<(String, f64)>,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0:?}")]
    Verification(Vec<Violation>),
}

/// LQ-style weights mapped onto the H2 performance channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub c_p: DMatrix<f64>,
    pub d_p: DMatrix<f64>,
}

impl PerformanceSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, SynthesisError> {
        if !q.is_square() || !r.is_square() {
            return Err(SynthesisError::Construction("Q and R must be square".into()));
        }
        if (&q - q.transpose()).amax() > 1e-12 || (&r - r.transpose()).amax() > 1e-12 {
            return Err(SynthesisError::Construction("Q and R must be symmetric".into()));
        }
        if min_eigenvalue(&q) < -1e-12 {
            return Err(SynthesisError::Construction("Q must be positive semidefinite".into()));
        }
        if min_eigenvalue(&r) <= 0.0 {
            return Err(SynthesisError::Construction("R must be positive definite".into()));
        }
        let n = q.nrows();
        let m = r.nrows();
        let mut c_p = DMatrix::zeros(n + m, n);
        c_p.view_mut((0, 0), (n, n)).copy_from(&psd_sqrt(&q));
        let mut d_p = DMatrix::zeros(n + m, m);
        d_p.view_mut((n, 0), (m, m)).copy_from(&psd_sqrt(&r));
        Ok(Self { q, r, c_p, d_p })
    }

    pub fn diagonal(q: &[f64], r: f64) -> Result<Self, SynthesisError> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_row_slice(q)),
            DMatrix::from_element(1, 1, r),
        )
    }

    /// Default weights for the four-state design.
    pub fn default_four_state() -> Self {
        Self::diagonal(&DEFAULT_Q4, DEFAULT_R).expect("default weights are valid")
    }

    /// Default weights for the integrator-augmented design.
    pub fn default_integral() -> Self {
        let mut q = DEFAULT_Q4.to_vec();
        q.push(DEFAULT_INTEGRATOR_WEIGHT);
        Self::diagonal(&q, DEFAULT_R).expect("default weights are valid")
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn nz(&self) -> usize {
        self.c_p.nrows()
    }

    /// Same state weight with `R` multiplied by `factor`.
    pub fn with_r_scaled(&self, factor: f64) -> Result<Self, SynthesisError> {
        Self::new(self.q.clone(), &self.r * factor)
    }
}

pub const DEFAULT_Q4: [f64; 4] = [0.1, 4.0, 1.0, 0.01];
pub const DEFAULT_R: f64 = 1.0;
pub const DEFAULT_INTEGRATOR_WEIGHT: f64 = 0.5;

/// Indices of the decision variables inside [`SdpProblem::layout`].
pub const VAR_P: usize = 0;
pub const VAR_L: usize = 1;
pub const VAR_S: usize = 2;

fn check_dims(modes: &DiscreteModePair, perf: &PerformanceSpec) -> Result<(), SynthesisError> {
    let n = perf.n();
    let m = perf.m();
    for (mode, dm) in modes.modes() {
        if dm.a.shape() != (n, n) || dm.b.shape() != (n, m) {
            return Err(SynthesisError::Construction(format!(
                "mode {} has A {:?}, B {:?}; weights expect n = {n}, m = {m}",
                mode.name(),
                dm.a.shape(),
                dm.b.shape()
            )));
        }
    }
    if perf.c_p.shape() != (perf.nz(), n) || perf.d_p.shape() != (perf.nz(), m) {
        return Err(SynthesisError::Construction("C_p / D_p dimensions".into()));
    }
    Ok(())
}

fn block2(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut m = DMatrix::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a);
    m.view_mut((0, c1), (r1, c2)).copy_from(b);
    m.view_mut((r1, 0), (r2, c1)).copy_from(c);
    m.view_mut((r1, c1), (r2, c2)).copy_from(d);
    m
}

/// Performance block `[[S, C_p P + D_p L], [(.)^T, P]]`.
pub fn performance_block(
    perf: &PerformanceSpec,
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> DMatrix<f64> {
    let off = &perf.c_p * p + &perf.d_p * l;
    block2(s, &off, &off.transpose(), p)
}

/// Stability block of one mode in the `(P, L)` variables.
pub fn stability_block(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = a.nrows();
    let bl = b * l;
    let top = p - a * p * a.transpose() - a * l.transpose() * b.transpose() - &bl * a.transpose()
        - DMatrix::identity(n, n);
    block2(&top, &bl, &bl.transpose(), p)
}

/// Assembles the H2 LMI program for both modes.
pub fn build_lmis(modes: &DiscreteModePair, perf: &PerformanceSpec) -> Result<SdpProblem, SynthesisError> {
    check_dims(modes, perf)?;
    let n = perf.n();
    let m = perf.m();
    let nz = perf.nz();
    let mut layout = VarLayout::new();
    layout.add("P", VarShape::Symmetric(n));
    layout.add("L", VarShape::Full(m, n));
    layout.add("S", VarShape::Symmetric(nz));

    let mut blocks = vec![LmiBlock::from_affine("performance", &layout, 0.0, |v| {
        performance_block(perf, &v[VAR_P], &v[VAR_L], &v[VAR_S])
    })];
    for (mode, dm) in modes.modes() {
        blocks.push(LmiBlock::from_affine(
            &format!("stability {}", mode.name()),
            &layout,
            STRICT_MARGIN,
            |v| stability_block(&dm.a, &dm.b, &v[VAR_P], &v[VAR_L]),
        ));
    }
    blocks.push(LmiBlock::from_affine("P positive", &layout, STRICT_MARGIN, |v| {
        v[VAR_P].clone()
    }));

    let mut objective = DVector::zeros(layout.len());
    let s_offset = layout.vars()[VAR_S].offset;
    let mut k = s_offset;
    for i in 0..nz {
        for j in i..nz {
            if i == j {
                objective[k] = 1.0;
            }
            k += 1;
        }
    }
    Ok(SdpProblem {
        layout,
        blocks,
        objective,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockResidual {
    pub block: String,
    /// Smallest eigenvalue of the block.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSolution {
    /// Gain row `K` (1 x n).
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// `trace(S)`.
    pub cost: f64,
    pub residuals: Vec<BlockResidual>,
}

impl SynthesisSolution {
    /// Extracts `(P, L, S)` from a solved [`build_lmis`] program.
    pub fn from_sdp(problem: &SdpProblem, sol: &SdpSolution) -> Result<Self, SynthesisError> {
        let p = problem.layout.matrix(VAR_P, &sol.x);
        let l = problem.layout.matrix(VAR_L, &sol.x);
        let s = problem.layout.matrix(VAR_S, &sol.x);
        let chol = p
            .clone()
            .cholesky()
            .ok_or_else(|| SynthesisError::Numerical("P is not positive definite".into()))?;
        let k = chol.solve(&l.transpose()).transpose();
        Ok(Self {
            k,
            p,
            cost: s.trace(),
            s,
            l,
            residuals: problem
                .blocks
                .iter()
                .zip(&sol.margins)
                .map(|(b, &margin)| BlockResidual {
                    block: b.name.clone(),
                    margin,
                })
                .collect(),
        })
    }

    pub fn gains(&self) -> Vec<f64> {
        self.k.iter().copied().collect()
    }

    /// Spectral radius of `A_i + B_i K` for each mode.
    pub fn spectral_radii(&self, modes: &DiscreteModePair) -> Vec<(Mode, f64)> {
        modes
            .modes()
            .into_iter()
            .map(|(mode, dm)| (mode, spectral_radius(&(&dm.a + &dm.b * &self.k))))
            .collect()
    }

    pub fn min_margin(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solves an assembled program and extracts the gain.
pub fn solve_sdp(problem: &SdpProblem, tol: f64) -> Result<SynthesisSolution, SynthesisError> {
    let sol = sdp::solve(problem, &SdpOptions::with_tol(tol))?;
    SynthesisSolution::from_sdp(problem, &sol)
}

pub fn synthesize(
    modes: &DiscreteModePair,
    perf: &PerformanceSpec,
    tol: f64,
) -> Result<SynthesisSolution, SynthesisError> {
    let problem = build_lmis(modes, perf)?;
    solve_sdp(&problem, tol)
}

/// Integrator-augmented design; `modes` is the four-state pair and `perf5`
/// must be sized for the five-state system `[x; i]`.
pub fn synthesize_integral(
    modes: &DiscreteModePair,
    perf5: &PerformanceSpec,
    tol: f64,
) -> Result<SynthesisSolution, SynthesisError> {
    let augmented = modes.with_distance_integrator();
    if perf5.n() != augmented.acc.n() {
        return Err(SynthesisError::Construction(format!(
            "integral design needs n = {}, weights have n = {}",
            augmented.acc.n(),
            perf5.n()
        )));
    }
    synthesize(&augmented, perf5, tol)
}

/// Quadratic form of the closed-loop Lyapunov inequality,
/// `(A + B K) P (A + B K)^T - P + I`, which must be negative definite.
pub fn closed_loop_lyapunov(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let acl = a + b * k;
    let n = a.nrows();
    symmetrize(&(&acl * p * acl.transpose() - p + DMatrix::identity(n, n)))
}
