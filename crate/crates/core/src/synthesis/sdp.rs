//! Small dense semidefinite programs over matrix-valued decision variables.
//!
//! A problem is `min c^T x` subject to a list of linear matrix inequalities
//! `F_j(x) = F_j0 + sum_k x_k F_jk >= margin_j I`. The solver is a primal
//! log-det barrier method with damped Newton centering and a phase-I search
//! for a strictly feasible start. Intended for a few dozen variables and
//! blocks of order ten; everything is dense and single threaded, so repeated
//! runs are bitwise reproducible.

use nalgebra::{DMatrix, DVector};

use super::SynthesisError;

/// Shape of one matrix-valued decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    /// Symmetric `n x n`, stored as its upper triangle.
    Symmetric(usize),
    /// Unstructured `rows x cols`, stored row-major.
    Full(usize, usize),
}

impl VarShape {
    pub fn scalar_count(&self) -> usize {
        match *self {
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Full(r, c) => r * c,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            VarShape::Symmetric(n) => (n, n),
            VarShape::Full(r, c) => (r, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixVar {
    pub name: String,
    pub shape: VarShape,
    pub offset: usize,
}

/// Maps named matrix variables onto the flat decision vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarLayout {
    vars: Vec<MatrixVar>,
    len: usize,
}

impl VarLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a variable and returns its index.
    pub fn add(&mut self, name: &str, shape: VarShape) -> usize {
        self.vars.push(MatrixVar {
            name: name.to_string(),
            shape,
            offset: self.len,
        });
        self.len += shape.scalar_count();
        self.vars.len() - 1
    }

    /// Total number of scalar decision variables.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn vars(&self) -> &[MatrixVar] {
        &self.vars
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Reassembles variable `idx` from the flat vector.
    pub fn matrix(&self, idx: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let var = &self.vars[idx];
        let mut k = var.offset;
        match var.shape {
            VarShape::Symmetric(n) => {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in i..n {
                        m[(i, j)] = x[k];
                        m[(j, i)] = x[k];
                        k += 1;
                    }
                }
                m
            }
            VarShape::Full(r, c) => {
                let mut m = DMatrix::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        m[(i, j)] = x[k];
                        k += 1;
                    }
                }
                m
            }
        }
    }

    /// All variables as matrices, in registration order.
    pub fn matrices(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..self.vars.len()).map(|i| self.matrix(i, x)).collect()
    }

    /// Flattens matrices (one per variable) into a decision vector.
    pub fn flatten(&self, mats: &[DMatrix<f64>]) -> DVector<f64> {
        let mut x = DVector::zeros(self.len);
        for (var, m) in self.vars.iter().zip(mats) {
            let mut k = var.offset;
            match var.shape {
                VarShape::Symmetric(n) => {
                    for i in 0..n {
                        for j in i..n {
                            x[k] = 0.5 * (m[(i, j)] + m[(j, i)]);
                            k += 1;
                        }
                    }
                }
                VarShape::Full(r, c) => {
                    for i in 0..r {
                        for j in 0..c {
                            x[k] = m[(i, j)];
                            k += 1;
                        }
                    }
                }
            }
        }
        x
    }
}

/// One affine matrix inequality `constant + sum_k x_k coeffs[k] >= margin I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub name: String,
    pub constant: DMatrix<f64>,
    /// One coefficient per scalar variable; `None` where the variable is absent.
    pub coeffs: Vec<Option<DMatrix<f64>>>,
    pub margin: f64,
}

impl LmiBlock {
    /// Builds a block from an affine map of the layout's matrix variables by
    /// evaluating it at the origin and at every unit vector.
    pub fn from_affine(
        name: &str,
        layout: &VarLayout,
        margin: f64,
        f: impl Fn(&[DMatrix<f64>]) -> DMatrix<f64>,
    ) -> Self {
        let zero = DVector::zeros(layout.len());
        let constant = f(&layout.matrices(&zero));
        let scale = 1.0 + constant.amax();
        let coeffs = (0..layout.len())
            .map(|k| {
                let mut e = zero.clone();
                e[k] = 1.0;
                let c = f(&layout.matrices(&e)) - &constant;
                if c.amax() <= 1e-15 * scale {
                    None
                } else {
                    Some(c)
                }
            })
            .collect();
        Self {
            name: name.to_string(),
            constant,
            coeffs,
            margin,
        }
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    /// `F(x)` without the margin shift.
    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (k, c) in self.coeffs.iter().enumerate() {
            if let Some(c) = c {
                if x[k] != 0.0 {
                    m += c * x[k];
                }
            }
        }
        m
    }

    /// Smallest eigenvalue of `F(x)`.
    pub fn min_eigenvalue(&self, x: &DVector<f64>) -> f64 {
        crate::linalg::min_eigenvalue(&self.eval(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub layout: VarLayout,
    pub blocks: Vec<LmiBlock>,
    pub objective: DVector<f64>,
}

impl SdpProblem {
    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    /// Relative duality-gap target.
    pub tol: f64,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Radius of the ball `|x| <= R` that keeps the barrier bounded.
    pub norm_bound: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            mu: 10.0,
            max_outer: 60,
            max_newton: 300,
            norm_bound: 1e7,
        }
    }
}

impl SdpOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: DVector<f64>,
    pub cost: f64,
    /// Smallest eigenvalue of every block at `x`, in problem order.
    pub margins: Vec<f64>,
    /// Final barrier gap bound `m / t`.
    pub gap: f64,
    pub newton_steps: usize,
}

/// Internal view: every constraint as `G(y) = G0 + sum y_k G_k > 0` over an
/// extended variable vector (phase I appends the slack `s`).
struct Barrier<'a> {
    blocks: &'a [LmiBlock],
    n: usize,
    /// Phase-I slack index (`G_j += s I`), if any.
    slack: bool,
    norm_bound: f64,
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        self.n + usize::from(self.slack)
    }

    fn degree(&self) -> f64 {
        (self.blocks.iter().map(|b| b.size()).sum::<usize>() + 1) as f64
    }

    fn shifted(&self, b: &LmiBlock, y: &DVector<f64>) -> DMatrix<f64> {
        let x = y.rows(0, self.n).into_owned();
        let mut g = b.eval(&x);
        let shift = if self.slack { y[self.n] } else { 0.0 } - b.margin;
        for i in 0..g.nrows() {
            g[(i, i)] += shift;
        }
        g
    }

    fn ball_slack(&self, y: &DVector<f64>) -> f64 {
        let x = y.rows(0, self.n);
        self.norm_bound * self.norm_bound - x.norm_squared()
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, y: &DVector<f64>) -> Option<f64> {
        let mut phi = 0.0;
        for b in self.blocks {
            let chol = self.shifted(b, y).cholesky()?;
            let l = chol.l_dirty();
            for i in 0..l.nrows() {
                phi -= 2.0 * l[(i, i)].ln();
            }
        }
        let ball = self.ball_slack(y);
        if ball <= 0.0 {
            return None;
        }
        Some(phi - ball.ln())
    }

    /// Gradient and Hessian of the barrier at an interior point.
    fn derivatives(&self, y: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let dim = self.dim();
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for b in self.blocks {
            let size = b.size();
            let chol = self.shifted(b, y).cholesky()?;
            let l = chol.l();
            // Whitened coefficients  L^-1 G_k L^-T.
            let mut active: Vec<(usize, DMatrix<f64>)> = Vec::new();
            let whiten = |c: &DMatrix<f64>| {
                let t = l.solve_lower_triangular(c).expect("triangular solve");
                let t = l
                    .solve_lower_triangular(&t.transpose())
                    .expect("triangular solve");
                crate::linalg::symmetrize(&t)
            };
            for (k, c) in b.coeffs.iter().enumerate() {
                if let Some(c) = c {
                    active.push((k, whiten(c)));
                }
            }
            if self.slack {
                active.push((self.n, whiten(&DMatrix::identity(size, size))));
            }
            for (i, (ki, gi)) in active.iter().enumerate() {
                grad[*ki] -= gi.trace();
                for (kj, gj) in active.iter().skip(i) {
                    let h = gi.dot(gj);
                    hess[(*ki, *kj)] += h;
                    if ki != kj {
                        hess[(*kj, *ki)] += h;
                    }
                }
            }
        }
        let ball = self.ball_slack(y);
        if ball <= 0.0 {
            return None;
        }
        for i in 0..self.n {
            grad[i] += 2.0 * y[i] / ball;
            hess[(i, i)] += 2.0 / ball;
            for j in 0..self.n {
                hess[(i, j)] += 4.0 * y[i] * y[j] / (ball * ball);
            }
        }
        Some((grad, hess))
    }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let neg = -grad;
    if let Some(ch) = hess.clone().cholesky() {
        return Some(ch.solve(&neg));
    }
    let reg = 1e-12 * (1.0 + hess.diagonal().amax());
    let shifted = hess + DMatrix::identity(hess.nrows(), hess.ncols()) * reg;
    shifted.cholesky().map(|ch| ch.solve(&neg))
}

enum CenterOutcome {
    Converged,
    /// Phase I found a strictly feasible point.
    Feasible,
}

/// Damped Newton minimization of `t c^T y + phi(y)`; `y` is updated in place.
fn center(
    barrier: &Barrier<'_>,
    c: &DVector<f64>,
    t: f64,
    y: &mut DVector<f64>,
    opts: &SdpOptions,
    steps: &mut usize,
) -> Result<CenterOutcome, SynthesisError> {
    let f = |y: &DVector<f64>| barrier.value(y).map(|phi| t * c.dot(y) + phi);
    let mut fy = f(y).ok_or_else(|| SynthesisError::Numerical("left barrier domain".into()))?;
    for _ in 0..opts.max_newton {
        let (g_phi, h) = barrier
            .derivatives(y)
            .ok_or_else(|| SynthesisError::Numerical("left barrier domain".into()))?;
        let grad = c * t + g_phi;
        let dir = newton_direction(&h, &grad)
            .ok_or_else(|| SynthesisError::Numerical("singular Newton system".into()))?;
        let decrement = -grad.dot(&dir);
        if decrement / 2.0 <= 1e-10 {
            return Ok(CenterOutcome::Converged);
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-14 {
            let cand = &*y + &dir * alpha;
            if let Some(fc) = f(&cand) {
                if fc <= fy - 0.01 * alpha * decrement {
                    *y = cand;
                    fy = fc;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        *steps += 1;
        if !accepted {
            // No progress possible at machine precision.
            return Ok(CenterOutcome::Converged);
        }
        if barrier.slack && y[barrier.n] < 0.0 {
            return Ok(CenterOutcome::Feasible);
        }
    }
    Ok(CenterOutcome::Converged)
}

fn strictly_feasible(problem: &SdpProblem, x: &DVector<f64>) -> bool {
    problem.blocks.iter().all(|b| {
        let mut g = b.eval(x);
        for i in 0..g.nrows() {
            g[(i, i)] -= b.margin;
        }
        g.cholesky().is_some()
    })
}

/// Phase I: minimize `s` subject to `F_j(x) - margin_j I + s I > 0`.
fn find_interior(problem: &SdpProblem, opts: &SdpOptions, steps: &mut usize) -> Result<DVector<f64>, SynthesisError> {
    let n = problem.layout.len();
    let x0 = DVector::zeros(n);
    if strictly_feasible(problem, &x0) {
        return Ok(x0);
    }
    let worst = problem
        .blocks
        .iter()
        .map(|b| b.min_eigenvalue(&x0) - b.margin)
        .fold(f64::INFINITY, f64::min);
    let mut y = DVector::zeros(n + 1);
    y[n] = (-worst).max(0.0) + 1.0;
    let barrier = Barrier {
        blocks: &problem.blocks,
        n,
        slack: true,
        norm_bound: opts.norm_bound,
    };
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let m = barrier.degree();
    let mut t = 1.0;
    for _ in 0..opts.max_outer {
        match center(&barrier, &c, t, &mut y, opts, steps)? {
            CenterOutcome::Feasible => return Ok(y.rows(0, n).into_owned()),
            CenterOutcome::Converged => {
                // On the central path the optimal slack is at least s - m/t.
                if y[n] - m / t > 0.0 {
                    return Err(SynthesisError::Infeasible {
                        slack: y[n],
                        residuals: residual_report(problem, &y.rows(0, n).into_owned()),
                    });
                }
            }
        }
        t *= opts.mu;
    }
    Err(SynthesisError::Infeasible {
        slack: y[n],
        residuals: residual_report(problem, &y.rows(0, n).into_owned()),
    })
}

fn residual_report(problem: &SdpProblem, x: &DVector<f64>) -> Vec<(String, f64)> {
    problem
        .blocks
        .iter()
        .map(|b| (b.name.clone(), b.min_eigenvalue(x)))
        .collect()
}

/// Solves `problem` to relative accuracy `tol`.
pub fn solve(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, SynthesisError> {
    let n = problem.layout.len();
    if problem.objective.len() != n {
        return Err(SynthesisError::Construction(format!(
            "objective has {} entries for {} variables",
            problem.objective.len(),
            n
        )));
    }
    for b in &problem.blocks {
        if b.coeffs.len() != n {
            return Err(SynthesisError::Construction(format!(
                "block {} has {} coefficients for {} variables",
                b.name,
                b.coeffs.len(),
                n
            )));
        }
    }
    let mut steps = 0;
    let mut x = find_interior(problem, opts, &mut steps)?;
    let barrier = Barrier {
        blocks: &problem.blocks,
        n,
        slack: false,
        norm_bound: opts.norm_bound,
    };
    let m = barrier.degree();
    let mut t = 1.0;
    let mut gap = f64::INFINITY;
    let mut prev_cost = f64::INFINITY;
    for _ in 0..opts.max_outer {
        center(&barrier, &problem.objective, t, &mut x, opts, &mut steps)?;
        gap = m / t;
        let cost = problem.objective_value(&x);
        let stalled = (prev_cost - cost).abs() <= opts.tol * (1.0 + cost.abs());
        if gap <= opts.tol * (1.0 + cost.abs()) || (stalled && gap <= 1e-3 * (1.0 + cost.abs())) {
            return Ok(SdpSolution {
                cost,
                margins: problem.blocks.iter().map(|b| b.min_eigenvalue(&x)).collect(),
                x,
                gap,
                newton_steps: steps,
            });
        }
        prev_cost = cost;
        t *= opts.mu;
    }
    Err(SynthesisError::NotConverged {
        gap,
        residuals: residual_report(problem, &x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_layout() -> VarLayout {
        let mut layout = VarLayout::new();
        layout.add("x", VarShape::Full(1, 1));
        layout
    }

    #[test]
    fn layout_round_trip() {
        let mut layout = VarLayout::new();
        layout.add("P", VarShape::Symmetric(4));
        layout.add("L", VarShape::Full(1, 4));
        layout.add("S", VarShape::Symmetric(5));
        assert_eq!(layout.len(), 10 + 4 + 15);
        let x = DVector::from_fn(layout.len(), |i, _| i as f64 * 0.5 - 3.0);
        let back = layout.flatten(&layout.matrices(&x));
        assert_eq!(x, back);
    }

    #[test]
    fn scalar_linear_program() {
        // min x  s.t.  x >= 2, 5 - x >= 0
        let layout = scalar_layout();
        let lower = LmiBlock::from_affine("lower", &layout, 0.0, |v| {
            DMatrix::from_element(1, 1, v[0][(0, 0)] - 2.0)
        });
        let upper = LmiBlock::from_affine("upper", &layout, 0.0, |v| {
            DMatrix::from_element(1, 1, 5.0 - v[0][(0, 0)])
        });
        let problem = SdpProblem {
            layout,
            blocks: vec![lower, upper],
            objective: DVector::from_element(1, 1.0),
        };
        let sol = solve(&problem, &SdpOptions::with_tol(1e-9)).unwrap();
        assert!((sol.cost - 2.0).abs() < 1e-6, "{}", sol.cost);
    }

    #[test]
    fn matrix_norm_minimization() {
        // min t  s.t. [[t, a],[a, t]] >= 0 for fixed a = 3  ->  t = 3
        let layout = scalar_layout();
        let blk = LmiBlock::from_affine("cone", &layout, 0.0, |v| {
            let t = v[0][(0, 0)];
            DMatrix::from_row_slice(2, 2, &[t, 3.0, 3.0, t])
        });
        let problem = SdpProblem {
            layout,
            blocks: vec![blk],
            objective: DVector::from_element(1, 1.0),
        };
        let sol = solve(&problem, &SdpOptions::with_tol(1e-9)).unwrap();
        assert!((sol.cost - 3.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_detected() {
        // x >= 1 and x <= 0
        let layout = scalar_layout();
        let a = LmiBlock::from_affine("a", &layout, 0.0, |v| {
            DMatrix::from_element(1, 1, v[0][(0, 0)] - 1.0)
        });
        let b = LmiBlock::from_affine("b", &layout, 0.0, |v| {
            DMatrix::from_element(1, 1, -v[0][(0, 0)])
        });
        let problem = SdpProblem {
            layout,
            blocks: vec![a, b],
            objective: DVector::from_element(1, 1.0),
        };
        assert!(matches!(
            solve(&problem, &SdpOptions::default()),
            Err(SynthesisError::Infeasible { .. })
        ));
    }
}
