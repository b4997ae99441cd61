//! Linear impulsive Dirichlet problem
//!
//! ```text
//! -u^ΔΔ + λ u^σ = h,   u^Δ(t_j⁺) - u^Δ(t_j⁻) = d_j,   u(a) = u(b) = 0
//! ```
//!
//! solved through its weak form `a(u, v) = l(v)` with
//! `a(u, v) = ∫ u^Δ v^Δ + λ ∫ u^σ v^σ` and `l(v) = ∫ h v^σ - Σ d_j v(t_j)`.

use crate::error::{Error, Result};
use crate::space::DirichletSpace;
use crate::timescale::{delta_derivative, GridFunction, TimeScaleMesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearImpulse {
    pub node: usize,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem {
    pub mesh: TimeScaleMesh,
    pub lambda: f64,
    pub h: GridFunction,
    pub impulses: Vec<LinearImpulse>,
    /// Per impulse: whether the gap following its node refines a real interval.
    pub right_dense: Vec<bool>,
}

/// One row of an iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub energy: f64,
    /// `max_k |a(u, e_k) - l(e_k)|` over the interior hat basis.
    pub weak_residual: f64,
    pub classical_residual: f64,
    pub jump_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    /// Smallest over largest pivot magnitude of the final linear solve, if any.
    pub pivot_ratio: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    /// Attempt the solve even when `lambda <= -lambda1`.
    pub allow_noncoercive: bool,
    pub tol: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions {
            allow_noncoercive: false,
            tol: 1e-8,
        }
    }
}

impl LinearProblem {
    pub fn new(
        mesh: TimeScaleMesh,
        lambda: f64,
        h: GridFunction,
        impulses: Vec<LinearImpulse>,
    ) -> Result<Self> {
        mesh.check(&h)?;
        let mut prev = 0;
        for imp in &impulses {
            if imp.node == 0 || imp.node >= mesh.gaps() || imp.node <= prev {
                return Err(Error::BadImpulseNode(imp.node));
            }
            prev = imp.node;
        }
        let right_dense = impulses
            .iter()
            .map(|imp| mesh.is_right_dense(imp.node))
            .collect();
        Ok(LinearProblem {
            mesh,
            lambda,
            h,
            impulses,
            right_dense,
        })
    }

    /// Coordinate representation of `l` on the interior hat basis, zero-padded.
    pub fn load(&self) -> GridFunction {
        let mu = self.mesh.mu();
        let n = self.mesh.gaps();
        let mut rhs = vec![0.0; n + 1];
        for k in 1..n {
            rhs[k] = mu[k - 1] * self.h[k - 1];
        }
        for imp in &self.impulses {
            rhs[imp.node] -= imp.d;
        }
        GridFunction(rhs)
    }

    /// `l(v) = Σ mu_i h_i v_{i+1} - Σ d_j v(t_j)`.
    pub fn l(&self, v: &GridFunction) -> f64 {
        let mu = self.mesh.mu();
        let mut acc: f64 = (0..self.mesh.gaps())
            .map(|i| mu[i] * self.h[i] * v[i + 1])
            .sum();
        for imp in &self.impulses {
            acc -= imp.d * v[imp.node];
        }
        acc
    }
}

/// Solves `(K + lambda S) u = l` on the interior unknowns.
pub fn solve_lp(
    problem: &LinearProblem,
    space: &DirichletSpace,
    lambda1: f64,
    opts: &LinearOptions,
) -> Result<SolveReport> {
    problem.mesh.check(&space.mesh().zeros())?;
    let mut warnings = Vec::new();
    if problem.lambda <= -lambda1 {
        if !opts.allow_noncoercive {
            return Err(Error::NonCoercive {
                lambda: problem.lambda,
                neg_lambda1: -lambda1,
            });
        }
        warnings.push(format!(
            "lambda = {} <= -lambda1 = {}: form is not coercive, solving anyway",
            problem.lambda, -lambda1
        ));
    }
    for (imp, dense) in problem.impulses.iter().zip(&problem.right_dense) {
        if !dense {
            warnings.push(format!(
                "impulse at t = {} is not right-dense; using the discrete jump",
                problem.mesh.nodes()[imp.node]
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let a = space.operator(problem.lambda);
    let load = problem.load();
    let rhs = space.interior(&load);
    let (x, pivot_ratio) = match a.ldlt() {
        Some(f) => (f.solve(rhs), None),
        None => {
            let lu = a.lu()?;
            (lu.solve(rhs), Some(lu.pivot_ratio))
        }
    };
    let solution = space.embed(&x);
    let energy = energy_lp(problem, space, &solution)?;
    let weak_residual = weak_residual(problem, space, &solution);
    let (classical_residual, jump_errors) = verify_classical(problem, &solution)?;
    Ok(SolveReport {
        energy,
        weak_residual,
        classical_residual,
        jump_errors,
        iterations: 1,
        converged: weak_residual < opts.tol,
        trace: vec![TraceRow {
            iter: 1,
            energy,
            grad_norm: weak_residual,
            step: 1.0,
        }],
        pivot_ratio,
        warnings,
        solution,
    })
}

/// `max_k |((K + lambda S) u - l)_k|`.
pub fn weak_residual(problem: &LinearProblem, space: &DirichletSpace, u: &GridFunction) -> f64 {
    let au = space.apply_operator(problem.lambda, u);
    let load = problem.load();
    au.0.iter()
        .zip(&load.0)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// `½ a(u, u) - l(u)`.
pub fn energy_lp(problem: &LinearProblem, space: &DirichletSpace, u: &GridFunction) -> Result<f64> {
    space.check_dirichlet(u)?;
    Ok(
        0.5 * space.stiffness_form(u) + 0.5 * problem.lambda * space.sigma_mass_form(u)
            - problem.l(u),
    )
}

/// Strong-form residual at non-impulse rows and the jump defect at impulse nodes.
///
/// On a mesh the equation row ending at an impulse node also carries the
/// `mu (λu - h)` contribution of the preceding gap; the jump defect subtracts
/// it, which leaves exactly `u^Δ(t_j⁺) - u^Δ(t_j⁻) - d_j` in the dense limit.
pub fn verify_classical(problem: &LinearProblem, u: &GridFunction) -> Result<(f64, Vec<f64>)> {
    let mesh = &problem.mesh;
    let du = delta_derivative(mesh, u)?;
    let mu = mesh.mu();
    let lambda = problem.lambda;
    let is_impulse = |k: usize| problem.impulses.iter().any(|imp| imp.node == k);

    let mut residual: f64 = 0.0;
    for i in 0..mesh.gaps() - 1 {
        if is_impulse(i + 1) {
            continue;
        }
        let ddu = (du[i + 1] - du[i]) / mu[i];
        residual = residual.max((-ddu + lambda * u[i + 1] - problem.h[i]).abs());
    }
    let jumps = problem
        .impulses
        .iter()
        .map(|imp| {
            let j = imp.node;
            let jump = du[j] - du[j - 1];
            (jump - mu[j - 1] * (lambda * u[j] - problem.h[j - 1]) - imp.d).abs()
        })
        .collect();
    Ok((residual, jumps))
}
