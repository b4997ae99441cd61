//! Nonlinear impulsive problems and their energy functionals.
//!
//! Two problem families share one implementation:
//!
//! * `-u^ΔΔ + λu^σ = f(t, u^σ)` with jumps `u^Δ(t_j⁺) - u^Δ(t_j⁻) = I_j(u(t_j))`;
//! * the drift problem `-u^ΔΔ + g u^Δ(σ) + λu^σ = f`, with jumps of the opposite
//!   sign, rewritten in divergence form `-(e_g u^Δ)^Δ + λ e_g u^σ = e_g f`.
//!
//! The energy on a mesh is
//!
//! ```text
//! E(u) = ½ Σ w_i (u_{i+1}-u_i)²/mu_i + (λ/2) Σ w_i mu_i u_{i+1}²
//!        + s Σ_j w(t_j) ∫₀^{u(t_j)} I_j  -  Σ mu_i w_i F(t_i, u_{i+1})
//! ```
//!
//! where `w = e_g` (or 1), `F(t, u) = ∫₀ᵘ f(t, ξ) dξ` and `s = ±1` follows the
//! jump convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::SymTridiagonal;
use crate::linear::{SolveReport, TraceRow};
use crate::quadrature::GaussLegendre;
use crate::space::DirichletSpace;
use crate::timescale::{delta_derivative, exp_fn, GridFunction, TimeScaleMesh};

pub const DEFAULT_QUADRATURE_ORDER: usize = 8;

/// Sign of the derivative jump relative to `I_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpConvention {
    /// `u^Δ(t⁺) - u^Δ(t⁻) = I(u)`; impulse integrals enter the energy with `+`.
    #[serde(rename = "P")]
    Plus,
    /// `-(u^Δ(t⁺) - u^Δ(t⁻)) = I(u)`; impulse integrals enter with `-`.
    #[serde(rename = "NP")]
    Minus,
}

impl JumpConvention {
    pub fn sign(self) -> f64 {
        match self {
            JumpConvention::Plus => 1.0,
            JumpConvention::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Impulse {
    pub node: usize,
    pub func: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulsiveProblem {
    pub mesh: TimeScaleMesh,
    pub lambda: f64,
    pub f: Expr,
    pub impulses: Vec<Impulse>,
    pub g: Option<Expr>,
    pub convention: JumpConvention,
}

impl ImpulsiveProblem {
    pub fn new(
        mesh: TimeScaleMesh,
        lambda: f64,
        f: Expr,
        impulses: Vec<Impulse>,
        g: Option<Expr>,
        convention: JumpConvention,
    ) -> Result<Self> {
        let mut prev = 0;
        for imp in &impulses {
            if imp.node == 0 || imp.node >= mesh.gaps() || imp.node <= prev {
                return Err(Error::BadImpulseNode(imp.node));
            }
            prev = imp.node;
        }
        Ok(ImpulsiveProblem {
            mesh,
            lambda,
            f,
            impulses,
            g,
            convention,
        })
    }

    /// Drift values `g(t_i)` on the nodes (zero when absent).
    pub fn drift(&self) -> Result<GridFunction> {
        let nodes = self.mesh.nodes();
        match &self.g {
            None => Ok(self.mesh.zeros()),
            Some(g) => Ok(GridFunction(
                nodes
                    .iter()
                    .map(|&t| g.eval(t, 0.0))
                    .collect::<Result<_, _>>()?,
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergyModel {
    pub space: DirichletSpace,
    /// `e_g(t_i, t_0)` (all ones without drift).
    pub weight: GridFunction,
    /// Minimum of the weight.
    pub m: f64,
    /// Maximum of the weight.
    pub big_m: f64,
    /// Principal eigenvalue of the unweighted pencil.
    pub lambda1: f64,
    /// `-m lambda1 / M`.
    pub lambda_bound: f64,
    pub lambda_bound_satisfied: bool,
    pub bound_alpha: f64,
    pub bound_beta: f64,
    /// `sqrt(T / m)`.
    pub delta: f64,
    pub quadrature: GaussLegendre,
    pub warnings: Vec<String>,
}

/// Constants `α, β` with `α‖u‖² ≤ A(u, u) ≤ β‖u‖²`.
pub fn weighted_bounds(lambda: f64, lambda1: f64, m: f64, big_m: f64) -> (f64, f64) {
    let r = 1.0 + lambda * big_m / (lambda1 * m);
    if lambda >= 0.0 {
        (1.0, r)
    } else {
        (r, 1.0)
    }
}

/// Builds the weighted energy model; without drift it is the plain model.
pub fn transform_np_to_npe(problem: &ImpulsiveProblem) -> Result<EnergyModel> {
    transform_with_order(problem, DEFAULT_QUADRATURE_ORDER)
}

pub fn transform_with_order(problem: &ImpulsiveProblem, order: usize) -> Result<EnergyModel> {
    let mesh = &problem.mesh;
    let mut warnings = Vec::new();
    let plain = DirichletSpace::assemble(mesh, None)?;
    let lambda1 = plain.smallest_eigenvalue()?.lambda1;
    let (space, weight) = match &problem.g {
        None => (plain, GridFunction(vec![1.0; mesh.len()])),
        Some(_) => {
            let e = exp_fn(mesh, &problem.drift()?)?;
            if !e.sign_changes.is_empty() {
                warnings.push(format!(
                    "e_g changes sign on {} gap(s); the weighted form is not positive",
                    e.sign_changes.len()
                ));
            }
            (DirichletSpace::assemble(mesh, Some(&e.values))?, e.values)
        }
    };
    let m = weight.0.iter().copied().fold(f64::INFINITY, f64::min);
    let big_m = weight.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lambda_bound = -m * lambda1 / big_m;
    let lambda_bound_satisfied = problem.lambda > lambda_bound;
    if !lambda_bound_satisfied {
        warnings.push(format!(
            "lambda = {} violates lambda > -m*lambda1/M = {lambda_bound}",
            problem.lambda
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let (bound_alpha, bound_beta) = weighted_bounds(problem.lambda, lambda1, m, big_m);
    Ok(EnergyModel {
        delta: (mesh.length() / m).sqrt(),
        space,
        weight,
        m,
        big_m,
        lambda1,
        lambda_bound,
        lambda_bound_satisfied,
        bound_alpha,
        bound_beta,
        quadrature: GaussLegendre::new(order),
        warnings,
    })
}

/// `∫₀ᵘ expr(t, ξ) dξ` by Gauss–Legendre quadrature of the given order.
pub fn antiderivative(expr: &Expr, t: f64, u: f64, order: usize) -> Result<f64> {
    antiderivative_with(&GaussLegendre::new(order), expr, t, u)
}

pub fn antiderivative_with(quad: &GaussLegendre, expr: &Expr, t: f64, u: f64) -> Result<f64> {
    if u == 0.0 {
        return Ok(0.0);
    }
    Ok(quad.integrate(0.0, u, |x| expr.eval(t, x))?)
}

/// Energy of `u` under `model`.
pub fn energy(model: &EnergyModel, problem: &ImpulsiveProblem, u: &GridFunction) -> Result<f64> {
    let space = &model.space;
    space.check_dirichlet(u)?;
    let mesh = &problem.mesh;
    let (nodes, mu) = (mesh.nodes(), mesh.mu());
    let mut e = 0.5 * space.stiffness_form(u) + 0.5 * problem.lambda * space.sigma_mass_form(u);
    let sign = problem.convention.sign();
    for imp in &problem.impulses {
        let j = imp.node;
        e += sign
            * model.weight[j]
            * antiderivative_with(&model.quadrature, &imp.func, nodes[j], u[j])?;
    }
    for i in 0..mesh.gaps() {
        e -= mu[i]
            * model.weight[i]
            * antiderivative_with(&model.quadrature, &problem.f, nodes[i], u[i + 1])?;
    }
    Ok(e)
}

/// Coordinate gradient of [`energy`] w.r.t. interior nodal values (zero at the boundary).
pub fn gradient(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    u: &GridFunction,
) -> Result<GridFunction> {
    model.space.check_dirichlet(u)?;
    let mesh = &problem.mesh;
    let (nodes, mu) = (mesh.nodes(), mesh.mu());
    let mut grad = model.space.apply_operator(problem.lambda, u);
    for k in 1..mesh.gaps() {
        grad.0[k] -= mu[k - 1] * model.weight[k - 1] * problem.f.eval(nodes[k - 1], u[k])?;
    }
    let sign = problem.convention.sign();
    for imp in &problem.impulses {
        let j = imp.node;
        grad.0[j] += sign * model.weight[j] * imp.func.eval(nodes[j], u[j])?;
    }
    Ok(grad)
}

/// Hessian of [`energy`] on interior unknowns.
pub fn tangent(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    u: &GridFunction,
) -> Result<SymTridiagonal> {
    let df = problem.f.diff_u()?;
    let mesh = &problem.mesh;
    let (nodes, mu) = (mesh.nodes(), mesh.mu());
    let mut h = model.space.operator(problem.lambda);
    for k in 1..mesh.gaps() {
        h.diag[k - 1] -= mu[k - 1] * model.weight[k - 1] * df.eval(nodes[k - 1], u[k])?;
    }
    let sign = problem.convention.sign();
    for imp in &problem.impulses {
        let j = imp.node;
        let di = imp.func.diff_u()?;
        h.diag[j - 1] += sign * model.weight[j] * di.eval(nodes[j], u[j])?;
    }
    Ok(h)
}

/// Strong-form residual of the drift problem at non-impulse rows,
/// `max |-u^ΔΔ - g u^Δ(σ) + λu^σ - f(t, u^σ)|`.
///
/// The drift term carries the sign that makes the problem equivalent to the
/// `e_g`-weighted divergence form; with `g` absent this is the plain residual.
pub fn np_residual(problem: &ImpulsiveProblem, u: &GridFunction) -> Result<f64> {
    let mesh = &problem.mesh;
    let du = delta_derivative(mesh, u)?;
    let g = problem.drift()?;
    let (nodes, mu) = (mesh.nodes(), mesh.mu());
    let mut worst: f64 = 0.0;
    for i in 0..mesh.gaps() - 1 {
        if problem.impulses.iter().any(|imp| imp.node == i + 1) {
            continue;
        }
        let ddu = (du[i + 1] - du[i]) / mu[i];
        let r = -ddu - g[i] * du[i + 1] + problem.lambda * u[i + 1]
            - problem.f.eval(nodes[i], u[i + 1])?;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Jump defects at impulse nodes, after removing the contribution of the gap
/// that ends at the node (which vanishes as the gap is refined).
pub fn jump_errors(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    u: &GridFunction,
) -> Result<Vec<f64>> {
    let mesh = &problem.mesh;
    let du = delta_derivative(mesh, u)?;
    let (nodes, mu) = (mesh.nodes(), mesh.mu());
    let sign = problem.convention.sign();
    problem
        .impulses
        .iter()
        .map(|imp| {
            let j = imp.node;
            let ratio = model.weight[j - 1] / model.weight[j];
            let bulk =
                mu[j - 1] * ratio * (problem.lambda * u[j] - problem.f.eval(nodes[j - 1], u[j])?);
            let jump = du[j] - ratio * du[j - 1];
            Ok((jump - bulk - sign * imp.func.eval(nodes[j], u[j])?).abs())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when the gradient sup-norm falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub newton: bool,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    pub shrink: f64,
    pub initial_step: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-8,
            max_iters: 10_000,
            newton: false,
            armijo_c: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
        }
    }
}

const MAX_BACKTRACKS: usize = 60;

/// Descent with Armijo backtracking.
///
/// The search direction is the Riesz representative of the gradient in the
/// space's own inner product (`-K_w⁻¹ ∇E`), or the Newton step when requested
/// and the tangent is positive definite.
pub fn minimize(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    u_init: &GridFunction,
    opts: &MinimizeOptions,
) -> Result<SolveReport> {
    let space = &model.space;
    space.check_dirichlet(u_init)?;
    let precond = space.stiffness().ldlt().ok_or(Error::SingularSystem)?;
    let mut u = u_init.clone();
    let mut e = energy(model, problem, &u)?;
    let mut grad = gradient(model, problem, &u)?;
    let mut trace = Vec::new();
    let mut step = 0.0;
    let mut iter = 0;
    loop {
        let gnorm = grad.sup_norm();
        trace.push(TraceRow {
            iter,
            energy: e,
            grad_norm: gnorm,
            step,
        });
        if gnorm < opts.tol {
            break;
        }
        if iter >= opts.max_iters {
            return Err(Error::NoConvergence(opts.max_iters));
        }
        iter += 1;

        let g_int = space.interior(&grad);
        let newton_dir = if opts.newton {
            tangent(model, problem, &u)?.ldlt().map(|f| f.solve(g_int))
        } else {
            None
        };
        let dir_int = newton_dir.unwrap_or_else(|| precond.solve(g_int));
        let dir = space.embed(&dir_int).scaled(-1.0);
        let slope = grad.dot(&dir);

        let noise = 1e-13 * (1.0 + e.abs());
        let mut s = opts.initial_step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            if (s * slope).abs() < noise {
                // the energy can no longer tell this step from no step
                break;
            }
            let trial = u.axpy(s, &dir);
            if let Ok(et) = energy(model, problem, &trial) {
                if et <= e + opts.armijo_c * s * slope {
                    accepted = Some((trial, et));
                    break;
                }
            }
            s *= opts.shrink;
        }
        let (next, enext) = match accepted {
            Some(a) => a,
            None => {
                // Below rounding level the energy cannot certify descent; take
                // the full step if it reduces the gradient instead.
                let trial = u.axpy(opts.initial_step, &dir);
                let et = energy(model, problem, &trial)?;
                let gt = gradient(model, problem, &trial)?;
                if (opts.initial_step * slope).abs() < noise && gt.sup_norm() < gnorm {
                    s = opts.initial_step;
                    (trial, et)
                } else {
                    return Err(Error::LineSearchStall(iter));
                }
            }
        };
        step = s;
        u = next;
        e = enext;
        grad = gradient(model, problem, &u)?;
    }

    let weak_residual = grad.sup_norm();
    Ok(SolveReport {
        energy: e,
        weak_residual,
        classical_residual: np_residual(problem, &u)?,
        jump_errors: jump_errors(model, problem, &u)?,
        iterations: iter,
        converged: weak_residual < opts.tol,
        trace,
        pivot_ratio: None,
        warnings: model.warnings.clone(),
        solution: u,
    })
}

/// Growth bounds `|f| ≤ a + b|u|^γ`, `|I_j| ≤ a_j + b_j|u|^γ` with `γ ∈ [0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SublinearBounds {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub impulses: Vec<(f64, f64)>,
}

/// `E(u) ≥ (α/2)r² - β₁ r - δ₁ r^{γ+1}` with `r = ‖u‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityBound {
    pub alpha: f64,
    pub beta1: f64,
    pub delta1: f64,
    pub gamma: f64,
}

impl CoercivityBound {
    pub fn new(model: &EnergyModel, bounds: &SublinearBounds) -> Self {
        let t = model.space.mesh().length();
        let (sa, sb) = bounds
            .impulses
            .iter()
            .fold((0.0, 0.0), |(x, y), (a, b)| (x + a, y + b));
        CoercivityBound {
            alpha: model.bound_alpha,
            beta1: model.big_m * model.delta * (t * bounds.a + sa),
            delta1: model.big_m * model.delta.powf(bounds.gamma + 1.0) * (t * bounds.b + sb),
            gamma: bounds.gamma,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        0.5 * self.alpha * r * r - self.beta1 * r - self.delta1 * r.powf(self.gamma + 1.0)
    }
}
