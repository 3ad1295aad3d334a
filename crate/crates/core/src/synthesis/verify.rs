//! Independent certificate check for a synthesized gain.
//!
//! Given only `K`, the closed-loop Lyapunov and performance conditions are
//! linear in `(P, S)`; re-solving them yields a fresh common certificate and
//! the H2 bound achieved by `K` on both modes.

use nalgebra::{DMatrix, DVector};

use super::sdp::{self, LmiBlock, SdpOptions, SdpProblem, VarLayout, VarShape};
use super::{
    performance_block, stability_block, BlockResidual, PerformanceSpec, SynthesisError,
    SynthesisSolution, STRICT_MARGIN,
};
use crate::dynamics::{DiscreteModePair, Mode};
use crate::linalg::{min_eigenvalue, norm2, spectral_radius};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnstableMode { mode: Mode, spectral_radius: f64 },
    BlockViolated { block: String, margin: f64 },
    NoCommonCertificate { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub spectral_radii: Vec<(Mode, f64)>,
    /// Margins of the solution's own `(P, L, S)` in the synthesis blocks.
    pub block_margins: Vec<BlockResidual>,
    /// `trace(S)` of the re-solved certificate, when one exists.
    pub certificate_cost: Option<f64>,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// First mode that is unstable or whose stability block fails with the
    /// solution's own `P`. Unstable modes take precedence.
    pub fn first_violated_mode(&self) -> Option<Mode> {
        let unstable = self.violations.iter().find_map(|v| match v {
            Violation::UnstableMode { mode, .. } => Some(*mode),
            _ => None,
        });
        unstable.or_else(|| {
            self.violations.iter().find_map(|v| match v {
                Violation::BlockViolated { block, .. } => [Mode::Acc, Mode::Dec]
                    .into_iter()
                    .find(|m| *block == format!("stability {}", m.name())),
                _ => None,
            })
        })
    }

    pub fn into_result(self) -> Result<Self, SynthesisError> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(SynthesisError::Verification(self.violations))
        }
    }
}

fn margin_tolerance(block: &DMatrix<f64>, tol: f64) -> f64 {
    tol * (1.0 + norm2(block))
}

fn certificate_problem(k: &DMatrix<f64>, modes: &DiscreteModePair, perf: &PerformanceSpec) -> SdpProblem {
    let n = perf.n();
    let nz = perf.nz();
    let mut layout = VarLayout::new();
    layout.add("P", VarShape::Symmetric(n));
    layout.add("S", VarShape::Symmetric(nz));
    let closed = &perf.c_p + &perf.d_p * k;
    let mut blocks = vec![LmiBlock::from_affine("performance", &layout, 0.0, |v| {
        let off = &closed * &v[0];
        let mut m = DMatrix::zeros(nz + n, nz + n);
        m.view_mut((0, 0), (nz, nz)).copy_from(&v[1]);
        m.view_mut((0, nz), (nz, n)).copy_from(&off);
        m.view_mut((nz, 0), (n, nz)).copy_from(&off.transpose());
        m.view_mut((nz, nz), (n, n)).copy_from(&v[0]);
        m
    })];
    for (mode, dm) in modes.modes() {
        let acl = &dm.a + &dm.b * k;
        blocks.push(LmiBlock::from_affine(
            &format!("stability {}", mode.name()),
            &layout,
            STRICT_MARGIN,
            |v| &v[0] - &acl * &v[0] * acl.transpose() - DMatrix::identity(n, n),
        ));
    }
    blocks.push(LmiBlock::from_affine("P positive", &layout, STRICT_MARGIN, |v| {
        v[0].clone()
    }));
    let mut objective = DVector::zeros(layout.len());
    let mut idx = layout.vars()[1].offset;
    for i in 0..nz {
        for j in i..nz {
            if i == j {
                objective[idx] = 1.0;
            }
            idx += 1;
        }
    }
    SdpProblem {
        layout,
        blocks,
        objective,
    }
}

/// Checks a bare gain `K`: closed-loop stability of each mode and a fresh
/// common certificate for the performance bound. No block margins are
/// reported since there is no `(P, L, S)` to evaluate.
pub fn verify_gain(
    k: &DMatrix<f64>,
    modes: &DiscreteModePair,
    perf: &PerformanceSpec,
    tol: f64,
) -> VerificationReport {
    let mut violations = Vec::new();
    let spectral_radii: Vec<(Mode, f64)> = modes
        .modes()
        .into_iter()
        .map(|(mode, dm)| (mode, spectral_radius(&(&dm.a + &dm.b * k))))
        .collect();
    for &(mode, rho) in &spectral_radii {
        if rho >= 1.0 {
            violations.push(Violation::UnstableMode {
                mode,
                spectral_radius: rho,
            });
        }
    }
    let certificate_cost = if k.shape() != (perf.m(), perf.n()) {
        violations.push(Violation::BlockViolated {
            block: "dimensions".into(),
            margin: f64::NEG_INFINITY,
        });
        None
    } else if spectral_radii.iter().all(|&(_, rho)| rho < 1.0) {
        let problem = certificate_problem(k, modes, perf);
        match sdp::solve(&problem, &SdpOptions::with_tol(tol.max(1e-9))) {
            Ok(cert) => Some(cert.cost),
            Err(e) => {
                violations.push(Violation::NoCommonCertificate {
                    reason: e.to_string(),
                });
                None
            }
        }
    } else {
        None
    };
    VerificationReport {
        spectral_radii,
        block_margins: Vec::new(),
        certificate_cost,
        violations,
    }
}

/// Checks `sol` against `modes` and `perf` from `K` alone, plus the margins
/// of its own `(P, L, S)` in the synthesis blocks.
pub fn verify_solution(
    sol: &SynthesisSolution,
    modes: &DiscreteModePair,
    perf: &PerformanceSpec,
    tol: f64,
) -> VerificationReport {
    let mut report = verify_gain(&sol.k, modes, perf, tol);
    let violations = &mut report.violations;
    let block_margins = &mut report.block_margins;
    let mut check = |name: String, block: DMatrix<f64>, strict: bool| {
        let margin = min_eigenvalue(&block);
        let bad = if strict {
            margin <= 0.0
        } else {
            margin < -margin_tolerance(&block, tol)
        };
        if bad {
            violations.push(Violation::BlockViolated {
                block: name.clone(),
                margin,
            });
        }
        block_margins.push(BlockResidual { block: name, margin });
    };
    if sol.p.shape() == (perf.n(), perf.n())
        && sol.l.shape() == (perf.m(), perf.n())
        && sol.s.shape() == (perf.nz(), perf.nz())
    {
        check(
            "performance".into(),
            performance_block(perf, &sol.p, &sol.l, &sol.s),
            false,
        );
        for (mode, dm) in modes.modes() {
            check(
                format!("stability {}", mode.name()),
                stability_block(&dm.a, &dm.b, &sol.p, &sol.l),
                true,
            );
        }
        check("P positive".into(), sol.p.clone(), true);
    } else {
        violations.push(Violation::BlockViolated {
            block: "dimensions".into(),
            margin: f64::NEG_INFINITY,
        });
    }
    report
}
