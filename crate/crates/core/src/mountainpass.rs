//! Second critical point by a numerical mountain pass.
//!
//! A polygonal path joins the low-energy points `u0` and `u1`. Each iteration
//! moves the highest path point downhill (in the space's inner product),
//! together with every other vertex in the upper half of the path's energy
//! range, and then re-spaces the vertices by arc length when that does not
//! raise the path maximum. The maximum therefore never increases and the path
//! settles across the lowest ridge between the endpoints; its top point
//! approximates a saddle-type critical point, which Newton's method polishes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{
    antiderivative_with, energy, gradient, tangent, EnergyModel, ImpulsiveProblem,
};
use crate::linear::TraceRow;
use crate::quadrature::GaussLegendre;
use crate::space::random_dirichlet;
use crate::timescale::GridFunction;

/// Relative tolerance on the superquadratic margin `u f - ηF`; quadrature of
/// `F` is exact only up to rounding.
pub const H1_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConditions {
    pub eta: f64,
    pub gamma: f64,
    pub s: f64,
}

impl GrowthConditions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 2.0) || !(self.gamma > 0.0) || !(self.s >= self.eta) {
            return Err(Error::Config(format!(
                "growth conditions need eta > 2, gamma > 0, s >= eta (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Sampled check of the growth hypotheses. The asymptotic ones are trend
/// tests over the sample set and therefore heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// Worst `(u f - ηF) / max(|u f|, |ηF|)` over samples with `|u| ≥ γ`.
    pub h1_margin: f64,
    /// Same margin for each impulse function.
    pub h1_impulse_margins: Vec<f64>,
    /// Samples with `|u| ≥ γ` where `ηF ≤ 0` (or `η∫I ≤ 0`).
    pub h1_positivity_violations: usize,
    pub h1_pass: bool,
    /// `sup_t |f| / |u|^s` at the largest sampled `|u|`.
    pub h2_tail_ratio: f64,
    pub h2_pass: bool,
    /// `sup_t |f| / |u|` at the smallest nonzero sampled `|u|`.
    pub h3_head_ratio: f64,
    pub h3_pass: bool,
}

fn rel_margin(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

/// Sup over `ts` of `|func(t, u)| / |u|^p` for each `u` of `mags` (ascending).
fn ratio_profile(func: &crate::expr::Expr, ts: &[f64], mags: &[f64], p: f64) -> Result<Vec<f64>> {
    mags.iter()
        .map(|&a| {
            let mut r: f64 = 0.0;
            for &t in ts {
                for u in [a, -a] {
                    r = r.max(func.eval(t, u)?.abs() / a.powf(p));
                }
            }
            Ok(r)
        })
        .collect()
}

/// A ratio profile "decays" if it is non-increasing along `seq` and ends
/// strictly below where it started (or at zero).
fn decays(seq: &[f64]) -> bool {
    let (Some(first), Some(last)) = (seq.first(), seq.last()) else {
        return true;
    };
    let monotone = seq.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    monotone && (*last == 0.0 || *last < *first)
}

pub fn check_growth(
    problem: &ImpulsiveProblem,
    gc: &GrowthConditions,
    t_samples: &[f64],
    u_samples: &[f64],
) -> Result<GrowthReport> {
    gc.validate()?;
    let quad = GaussLegendre::new(crate::functional::DEFAULT_QUADRATURE_ORDER);
    let nodes = problem.mesh.nodes();

    let mut positivity = 0;
    let mut h1_margin = f64::INFINITY;
    for &t in t_samples {
        for &u in u_samples.iter().filter(|u| u.abs() >= gc.gamma) {
            let big_f = antiderivative_with(&quad, &problem.f, t, u)?;
            let uf = u * problem.f.eval(t, u)?;
            if !(gc.eta * big_f > 0.0) {
                positivity += 1;
            }
            h1_margin = h1_margin.min(rel_margin(gc.eta * big_f, uf));
        }
    }
    let mut h1_impulse_margins = Vec::new();
    for imp in &problem.impulses {
        let t = nodes[imp.node];
        let mut worst = f64::INFINITY;
        for &u in u_samples.iter().filter(|u| u.abs() >= gc.gamma) {
            let big_i = antiderivative_with(&quad, &imp.func, t, u)?;
            let ui = u * imp.func.eval(t, u)?;
            if !(gc.eta * big_i > 0.0) {
                positivity += 1;
            }
            worst = worst.min(rel_margin(gc.eta * big_i, ui));
        }
        h1_impulse_margins.push(worst);
    }
    let h1_pass = positivity == 0
        && h1_margin >= -H1_REL_TOL
        && h1_impulse_margins.iter().all(|m| *m >= -H1_REL_TOL);

    // magnitudes, ascending, without zero
    let mut mags: Vec<f64> = u_samples
        .iter()
        .map(|u| u.abs())
        .filter(|a| *a > 0.0)
        .collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup();
    let quarter = (mags.len() / 4).max(2).min(mags.len());
    let tail = &mags[mags.len() - quarter..];
    let head = &mags[..quarter];

    let mut h2_pass = true;
    let mut h3_pass = true;
    let mut h2_tail_ratio: f64 = 0.0;
    let mut h3_head_ratio: f64 = 0.0;
    let mut check = |func: &crate::expr::Expr, ts: &[f64]| -> Result<()> {
        let tail_prof = ratio_profile(func, ts, tail, gc.s)?;
        h2_pass &= decays(&tail_prof);
        h2_tail_ratio = h2_tail_ratio.max(*tail_prof.last().unwrap_or(&0.0));
        let mut head_prof = ratio_profile(func, ts, head, 1.0)?;
        head_prof.reverse(); // toward zero
        h3_pass &= decays(&head_prof);
        h3_head_ratio = h3_head_ratio.max(*head_prof.last().unwrap_or(&0.0));
        Ok(())
    };
    check(&problem.f, t_samples)?;
    for imp in &problem.impulses {
        check(&imp.func, &[nodes[imp.node]])?;
    }

    Ok(GrowthReport {
        h1_margin,
        h1_impulse_margins,
        h1_positivity_violations: positivity,
        h1_pass,
        h2_tail_ratio,
        h2_pass,
        h3_head_ratio,
        h3_pass,
    })
}

/// `±10^k` for `k` evenly spaced in `[-3, 3]`.
pub fn default_u_samples() -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..=60 {
        let a = 10f64.powf(-3.0 + 0.1 * k as f64);
        out.push(a);
        out.push(-a);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarPoint {
    pub u1: GridFunction,
    /// Scale `N` with `u1 = N · direction / ‖direction‖`.
    pub scale: f64,
    pub energy: f64,
}

/// Deformation stops early (and hands over to Newton) once the path maximum
/// has not dropped for this many iterations.
pub const STALL_WINDOW: usize = 500;

/// Largest vertex move per iteration, relative to the mean path spacing.
const STEP_CAP: f64 = 1.0;
/// Only vertices above this fraction of the way from the endpoint level to
/// the path maximum are moved; the low tails stay put.
const MOVE_LEVEL: f64 = 0.5;

pub const FAR_POINT_DOUBLINGS: usize = 60;

/// Doubles `N` from 1 until `E(N d) ≤ -target_drop` for the normalized direction `d`.
pub fn find_far_point(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    direction: &GridFunction,
    target_drop: f64,
) -> Result<FarPoint> {
    let norm = model.space.h1_norm(direction)?;
    if !(norm > 0.0) {
        return Err(Error::NoDescentDirection(0));
    }
    let d = direction.scaled(1.0 / norm);
    let mut scale = 1.0;
    for _ in 0..=FAR_POINT_DOUBLINGS {
        let u = d.scaled(scale);
        match energy(model, problem, &u) {
            Ok(e) if e <= -target_drop => {
                return Ok(FarPoint {
                    u1: u,
                    scale,
                    energy: e,
                })
            }
            Ok(_) => {}
            Err(_) => break,
        }
        scale *= 2.0;
    }
    Err(Error::NoDescentDirection(FAR_POINT_DOUBLINGS))
}

/// Radius of the sphere around 0 on which the growth estimates force
/// `E ≥ α ρ₀² / 8`, with the growth constants estimated by sampling.
/// `f64::INFINITY` when there is no nonlinear term.
pub fn barrier_radius(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    gc: &GrowthConditions,
) -> Result<f64> {
    if !(gc.s > 1.0) {
        return Err(Error::EstimationFailed(format!(
            "exponent s = {} must exceed 1",
            gc.s
        )));
    }
    let nodes = problem.mesh.nodes();
    let p = problem.impulses.len() as f64;
    let (alpha, big_m, m, delta) = (model.bound_alpha, model.big_m, model.m, model.delta);
    let eps = alpha / (2.0 * big_m * (1.0 / (m * model.lambda1) + delta * delta * p));
    let samples = default_u_samples();

    let estimate = |func: &crate::expr::Expr, ts: &[f64]| -> Result<f64> {
        let mut c1: f64 = 0.0;
        for &t in ts {
            for &u in &samples {
                let excess = (func.eval(t, u)?.abs() - eps * u.abs()) / u.abs().powf(gc.s);
                c1 = c1.max(excess);
            }
        }
        if !c1.is_finite() {
            return Err(Error::EstimationFailed("non-finite growth constant".into()));
        }
        Ok(c1 / (gc.s + 1.0))
    };
    let c2 = estimate(&problem.f, nodes)?;
    let mut c2j = 0.0;
    for imp in &problem.impulses {
        c2j += estimate(&imp.func, &[nodes[imp.node]])?;
    }
    let t = problem.mesh.length();
    let q = delta.powf(gc.s + 1.0) * (t * c2 + c2j);
    if q == 0.0 {
        return Ok(f64::INFINITY);
    }
    let rho = (alpha / (8.0 * big_m * q)).powf(1.0 / (gc.s - 1.0));
    if !rho.is_finite() {
        return Err(Error::EstimationFailed(format!("rho0 = {rho}")));
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainPassOptions {
    pub path_points: usize,
    /// Gradient sup-norm accepted at the pass point.
    pub tol: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    /// Re-even the path every this many iterations.
    pub reparam_every: usize,
    pub polish: bool,
    pub growth: Option<GrowthConditions>,
    pub sphere_samples: usize,
    pub seed: u64,
}

impl Default for MountainPassOptions {
    fn default() -> Self {
        MountainPassOptions {
            path_points: 41,
            tol: 1e-6,
            max_iters: 20_000,
            armijo_c: 1e-4,
            reparam_every: 1,
            polish: true,
            growth: None,
            sphere_samples: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassResult {
    pub u_star: GridFunction,
    pub energy_star: f64,
    pub grad_norm: f64,
    /// Energies along the final path.
    pub path_energies: Vec<f64>,
    pub rho0: Option<f64>,
    pub iterations: usize,
    /// Path maximum per deformation step.
    pub trace: Vec<TraceRow>,
    pub sphere_min_energy: Option<f64>,
    pub barrier_observed: Option<bool>,
    /// Largest distance of late iterates from the final pass point.
    pub ps_spread: f64,
    pub polished: bool,
    pub warnings: Vec<String>,
}

fn norm_diff(model: &EnergyModel, a: &GridFunction, b: &GridFunction) -> f64 {
    model.space.stiffness_form(&a.axpy(-1.0, b)).sqrt()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Resamples the polygon at equal arc length in the energy norm.
fn reparametrize(model: &EnergyModel, path: &[GridFunction]) -> Vec<GridFunction> {
    let p = path.len();
    let mut cum = vec![0.0; p];
    for k in 1..p {
        cum[k] = cum[k - 1] + norm_diff(model, &path[k], &path[k - 1]);
    }
    let total = cum[p - 1];
    if !(total > 0.0) {
        return path.to_vec();
    }
    let mut out = Vec::with_capacity(p);
    out.push(path[0].clone());
    let mut seg = 0;
    for j in 1..p - 1 {
        let target = total * j as f64 / (p - 1) as f64;
        while seg + 1 < p - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let theta = if len > 0.0 {
            (target - cum[seg]) / len
        } else {
            0.0
        };
        out.push(path[seg].axpy(theta, &path[seg + 1].axpy(-1.0, &path[seg])));
    }
    out.push(path[p - 1].clone());
    out
}

fn path_energies(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    path: &[GridFunction],
) -> Result<Vec<f64>> {
    path.iter().map(|u| energy(model, problem, u)).collect()
}

/// One Armijo step along the descent direction with its component along the
/// path chord removed, so vertices do not slide toward the ends. The move is
/// capped at a fraction of the path spacing to keep the deformation gradual.
#[allow(clippy::too_many_arguments)]
fn descend_across(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    precond: &crate::linalg::Ldlt,
    u: &mut GridFunction,
    e: &mut f64,
    g: &GridFunction,
    chord: &GridFunction,
    spacing: f64,
    step: &mut f64,
    armijo_c: f64,
) -> Result<bool> {
    let space = &model.space;
    let riesz = space.embed(&precond.solve(space.interior(g)));
    let chord_norm = space.stiffness_form(chord).sqrt();
    let dir = if chord_norm > 0.0 {
        let tau = chord.scaled(1.0 / chord_norm);
        riesz.scaled(-1.0).axpy(g.dot(&tau), &tau)
    } else {
        riesz.scaled(-1.0)
    };
    let slope = g.dot(&dir);
    if !(slope < 0.0) {
        return Ok(false);
    }
    let dir_norm = space.stiffness_form(&dir).sqrt();
    let mut s = (2.0 * *step).min(1.0).min(STEP_CAP * spacing / dir_norm);
    for _ in 0..60 {
        let trial = u.axpy(s, &dir);
        if let Ok(et) = energy(model, problem, &trial) {
            if et <= *e + armijo_c * s * slope {
                *u = trial;
                *e = et;
                *step = s;
                return Ok(true);
            }
        }
        s *= 0.5;
    }
    Ok(false)
}

/// Highest point of the polygon through three consecutive vertices,
/// by golden-section search on each of its two segments.
fn path_local_max(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    pts: &[GridFunction],
) -> Result<(GridFunction, f64)> {
    let mut best = (pts[1].clone(), energy(model, problem, &pts[1])?);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for w in pts.windows(2) {
        let seg = w[1].axpy(-1.0, &w[0]);
        let at = |th: f64| -> Result<f64> { energy(model, problem, &w[0].axpy(th, &seg)) };
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let (mut f1, mut f2) = (at(x1)?, at(x2)?);
        for _ in 0..80 {
            if f1 > f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = at(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = at(x2)?;
            }
        }
        let th = 0.5 * (lo + hi);
        let e = at(th)?;
        if e > best.1 {
            best = (w[0].axpy(th, &seg), e);
        }
    }
    Ok(best)
}

/// Newton iteration on `∇E = 0`, with backtracking on `‖∇E‖₂`.
fn newton_polish(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    start: &GridFunction,
    target: f64,
) -> Result<GridFunction> {
    let space = &model.space;
    let mut u = start.clone();
    let mut g = gradient(model, problem, &u)?;
    let l2 = |g: &GridFunction| g.dot(g).sqrt();
    for _ in 0..50 {
        if g.sup_norm() < target {
            break;
        }
        let h = tangent(model, problem, &u)?;
        let Ok(lu) = h.lu() else { break };
        let step = space.embed(&lu.solve(space.interior(&g))).scaled(-1.0);
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let trial = u.axpy(s, &step);
            if let Ok(gt) = gradient(model, problem, &trial) {
                if l2(&gt) < l2(&g) {
                    u = trial;
                    g = gt;
                    moved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(u)
}

pub fn mountain_pass(
    model: &EnergyModel,
    problem: &ImpulsiveProblem,
    u0: &GridFunction,
    u1: &GridFunction,
    opts: &MountainPassOptions,
) -> Result<PassResult> {
    let space = &model.space;
    space.check_dirichlet(u0)?;
    space.check_dirichlet(u1)?;
    let np = opts.path_points.max(3);
    let e0 = energy(model, problem, u0)?;
    let e1 = energy(model, problem, u1)?;
    let floor = e0.max(e1);
    let mut warnings = Vec::new();

    // barrier diagnostics around u0
    let rho0 = match &opts.growth {
        Some(gc) => Some(barrier_radius(model, problem, gc)?),
        None => None,
    };
    let mut sphere_min_energy = None;
    if let Some(rho) = rho0.filter(|r| r.is_finite()) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut lowest = f64::INFINITY;
        for _ in 0..opts.sphere_samples {
            let v = random_dirichlet(space, &mut rng);
            let n = space.stiffness_form(&v).sqrt();
            if n > 0.0 {
                let probe = u0.axpy(rho / n, &v);
                lowest = lowest.min(energy(model, problem, &probe)?);
            }
        }
        sphere_min_energy = Some(lowest);
        if !(lowest > floor) {
            warnings.push(format!(
                "no energy barrier observed on the sphere of radius {rho:.6e} (min {lowest:.6e} <= {floor:.6e})"
            ));
        }
    }

    let precond = space.stiffness().ldlt().ok_or(Error::SingularSystem)?;
    let diff = u1.axpy(-1.0, u0);
    let mut path: Vec<GridFunction> = (0..np)
        .map(|k| u0.axpy(k as f64 / (np - 1) as f64, &diff))
        .collect();
    let mut energies = path_energies(model, problem, &path)?;

    let mut trace = Vec::new();
    // max points of the last 10% of iterations
    let mut late = std::collections::VecDeque::new();
    let mut best_e = f64::INFINITY;
    let mut last_improvement = 0;
    let mut step = 1.0;
    let mut steps = vec![1.0; np];
    let mut it = 0;
    let mut k_star;
    let mut gn;
    loop {
        k_star = argmax(&energies);
        if k_star == 0 || k_star == np - 1 || !(energies[k_star] > floor) {
            return Err(Error::DegeneratePath);
        }
        let g = gradient(model, problem, &path[k_star])?;
        gn = g.sup_norm();
        trace.push(TraceRow {
            iter: it,
            energy: energies[k_star],
            grad_norm: gn,
            step,
        });
        late.push_back(path[k_star].clone());
        while late.len() > (it / 10).max(1) {
            late.pop_front();
        }
        if gn < opts.tol || it >= opts.max_iters {
            break;
        }
        if energies[k_star] < best_e - 1e-9 * (1.0 + best_e.abs()) {
            best_e = energies[k_star];
            last_improvement = it;
        } else if opts.polish && it - last_improvement > STALL_WINDOW {
            // the discrete path has resolved the ridge as well as it can
            break;
        }
        it += 1;

        let spacing = (1..np)
            .map(|k| norm_diff(model, &path[k], &path[k - 1]))
            .sum::<f64>()
            / (np - 1) as f64;
        let mut top_moved = false;
        let level = floor + MOVE_LEVEL * (energies[k_star] - floor);
        for k in 1..np - 1 {
            if energies[k] < level {
                continue;
            }
            let gk = if k == k_star {
                g.clone()
            } else {
                gradient(model, problem, &path[k])?
            };
            let chord = path[k + 1].axpy(-1.0, &path[k - 1]);
            let moved = descend_across(
                model,
                problem,
                &precond,
                &mut path[k],
                &mut energies[k],
                &gk,
                &chord,
                spacing,
                &mut steps[k],
                opts.armijo_c,
            )?;
            if k == k_star {
                top_moved = moved;
            }
        }
        if !top_moved {
            break;
        }
        step = steps[k_star];

        if it % opts.reparam_every == 0 {
            let current_max = energies[argmax(&energies)];
            let candidate = reparametrize(model, &path);
            let ce = path_energies(model, problem, &candidate)?;
            if ce[argmax(&ce)] <= current_max {
                path = candidate;
                energies = ce;
            }
        }
    }

    let mut u_star = path[k_star].clone();
    let mut energy_star = energies[k_star];
    let mut polished = false;
    if opts.polish && gn >= opts.tol / 100.0 {
        let (start, _) = path_local_max(model, problem, &path[k_star - 1..=k_star + 1])?;
        let reach = 0.5 * norm_diff(model, &start, u0).min(norm_diff(model, &start, u1));
        if let Ok(candidate) = newton_polish(model, problem, &start, opts.tol / 100.0) {
            let cg = gradient(model, problem, &candidate)?.sup_norm();
            let ce = energy(model, problem, &candidate)?;
            if cg < gn && ce > floor && norm_diff(model, &candidate, &start) <= reach {
                u_star = candidate;
                energy_star = ce;
                gn = cg;
                polished = true;
            } else {
                warnings
                    .push("Newton polish left the mountain-pass level; kept the path point".into());
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if !(gn < opts.tol) {
        return Err(Error::NoConvergence(it));
    }
    let ps_spread = late
        .iter()
        .map(|v| norm_diff(model, v, &u_star))
        .fold(0.0, f64::max);
    Ok(PassResult {
        u_star,
        energy_star,
        grad_norm: gn,
        path_energies: energies,
        rho0,
        iterations: it,
        trace,
        barrier_observed: sphere_min_energy.map(|m| m > floor),
        sphere_min_energy,
        ps_spread,
        polished,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::functional::{
        minimize, transform_np_to_npe, Impulse, JumpConvention, MinimizeOptions,
    };
    use crate::timescale::{build_mesh, TimeScaleSpec};

    fn example() -> ImpulsiveProblem {
        let mesh = build_mesh(&TimeScaleSpec::lattice(0.0, 1.0, 0.1)).unwrap();
        ImpulsiveProblem::new(
            mesh,
            0.0,
            parse("t*u^5").unwrap(),
            vec![Impulse {
                node: 5,
                func: parse("u^5").unwrap(),
            }],
            Some(parse("1").unwrap()),
            JumpConvention::Minus,
        )
        .unwrap()
    }

    fn hat(n: usize, j: usize) -> GridFunction {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        GridFunction(v)
    }

    #[test]
    fn growth_of_example_nonlinearity() {
        let p = example();
        let gc = GrowthConditions {
            eta: 6.0,
            gamma: 0.1,
            s: 6.0,
        };
        let ts = &p.mesh.nodes()[1..p.mesh.gaps()];
        let r = check_growth(&p, &gc, ts, &default_u_samples()).unwrap();
        assert!(r.h1_margin.abs() <= H1_REL_TOL);
        assert!(r.h1_impulse_margins[0].abs() <= H1_REL_TOL);
        assert!(r.h1_pass && r.h2_pass && r.h3_pass);
    }

    #[test]
    fn growth_of_cubic_and_constant() {
        let mesh = build_mesh(&TimeScaleSpec::lattice(0.0, 1.0, 0.1)).unwrap();
        let ts = mesh.nodes().to_vec();
        let cubic = ImpulsiveProblem::new(
            mesh.clone(),
            0.0,
            parse("u^3").unwrap(),
            vec![],
            None,
            JumpConvention::Plus,
        )
        .unwrap();
        let gc = GrowthConditions {
            eta: 4.0,
            gamma: 0.5,
            s: 4.0,
        };
        let r = check_growth(&cubic, &gc, &ts, &default_u_samples()).unwrap();
        assert!(r.h1_margin.abs() <= H1_REL_TOL && r.h1_pass);
        assert!(r.h3_pass);

        let one = ImpulsiveProblem::new(
            mesh,
            0.0,
            parse("1").unwrap(),
            vec![],
            None,
            JumpConvention::Plus,
        )
        .unwrap();
        let r = check_growth(&one, &gc, &ts, &default_u_samples()).unwrap();
        assert!(!r.h3_pass);
        assert!(r.h3_head_ratio >= 999.0);
        assert!(!r.h1_pass);
    }

    #[test]
    fn invalid_growth_constants() {
        let bad = GrowthConditions {
            eta: 2.0,
            gamma: 1.0,
            s: 3.0,
        };
        assert!(bad.validate().is_err());
        let bad = GrowthConditions {
            eta: 3.0,
            gamma: 1.0,
            s: 2.5,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn far_point_for_example() {
        let p = example();
        let model = transform_np_to_npe(&p).unwrap();
        let fp = find_far_point(&model, &p, &hat(11, 5), 1.0).unwrap();
        assert!(fp.energy <= -1.0);
        assert!(fp.scale > 1.0);
    }

    #[test]
    fn far_point_fails_for_coercive_energy() {
        let mut p = example();
        p.f = parse("0").unwrap();
        p.impulses[0].func = parse("0").unwrap();
        let model = transform_np_to_npe(&p).unwrap();
        assert_eq!(
            find_far_point(&model, &p, &hat(11, 5), 1.0),
            Err(Error::NoDescentDirection(FAR_POINT_DOUBLINGS))
        );
    }

    #[test]
    fn far_point_for_cubic() {
        let mesh = build_mesh(&TimeScaleSpec::interval(0.0, 1.0, 20)).unwrap();
        let p = ImpulsiveProblem::new(
            mesh,
            0.0,
            parse("u^3").unwrap(),
            vec![],
            None,
            JumpConvention::Plus,
        )
        .unwrap();
        let model = transform_np_to_npe(&p).unwrap();
        let dir = GridFunction::from_fn(&p.mesh, |t| t * (1.0 - t));
        assert!(find_far_point(&model, &p, &dir, 1.0).is_ok());
    }

    #[test]
    fn barrier_radius_behaviour() {
        let p = example();
        let model = transform_np_to_npe(&p).unwrap();
        let gc5 = GrowthConditions {
            eta: 5.0,
            gamma: 0.1,
            s: 5.0,
        };
        let rho = barrier_radius(&model, &p, &gc5).unwrap();
        assert!(rho > 0.0 && rho.is_finite());

        let mut doubled = p.clone();
        doubled.f = parse("2*t*u^5").unwrap();
        doubled.impulses[0].func = parse("2*u^5").unwrap();
        let rho2 = barrier_radius(&model, &doubled, &gc5).unwrap();
        assert!(rho2 < rho);

        let mut zero = p.clone();
        zero.f = parse("0").unwrap();
        zero.impulses.clear();
        assert_eq!(barrier_radius(&model, &zero, &gc5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn sphere_energy_exceeds_certified_level() {
        let p = example();
        let model = transform_np_to_npe(&p).unwrap();
        let gc = GrowthConditions {
            eta: 6.0,
            gamma: 0.1,
            s: 6.0,
        };
        let rho = barrier_radius(&model, &p, &gc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let v = random_dirichlet(&model.space, &mut rng);
            let v = v.scaled(rho / model.space.h1_norm(&v).unwrap());
            let e = energy(&model, &p, &v).unwrap();
            assert!(e >= model.bound_alpha * rho * rho / 8.0);
        }
    }

    #[test]
    fn example_has_second_critical_point() {
        let p = example();
        let model = transform_np_to_npe(&p).unwrap();
        let u0 = p.mesh.zeros();
        let fp = find_far_point(&model, &p, &hat(11, 5), 1.0).unwrap();
        let opts = MountainPassOptions {
            growth: Some(GrowthConditions {
                eta: 6.0,
                gamma: 0.1,
                s: 6.0,
            }),
            ..Default::default()
        };
        let r = mountain_pass(&model, &p, &u0, &fp.u1, &opts).unwrap();
        assert!(r.grad_norm < 1e-6);
        assert!(model.space.h1_norm(&r.u_star).unwrap() > 1e-3);
        assert!(r.energy_star > 0.0);
        assert_eq!(r.barrier_observed, Some(true));
        // path maximum never increases
        assert!(r.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
    }

    #[test]
    fn convex_energy_has_no_pass() {
        let mut p = example();
        p.f = parse("u").unwrap();
        p.impulses[0].func = parse("0.5*u").unwrap();
        let model = transform_np_to_npe(&p).unwrap();
        let u1 = hat(11, 5).scaled(3.0);
        let r = mountain_pass(
            &model,
            &p,
            &p.mesh.zeros(),
            &u1,
            &MountainPassOptions::default(),
        );
        assert_eq!(r, Err(Error::DegeneratePath));
    }

    #[test]
    fn symmetric_double_well_passes_through_origin() {
        let mesh = build_mesh(&TimeScaleSpec::lattice(0.0, 1.0, 0.1)).unwrap();
        let plain = crate::space::DirichletSpace::assemble(&mesh, None).unwrap();
        let info = plain.smallest_eigenvalue().unwrap();
        let p = ImpulsiveProblem::new(
            mesh,
            -1.5 * info.lambda1,
            parse("-u^3").unwrap(),
            vec![],
            None,
            JumpConvention::Plus,
        )
        .unwrap();
        let model = transform_np_to_npe(&p).unwrap();
        let opts = MinimizeOptions::default();
        let w = minimize(&model, &p, &info.eigvec, &opts).unwrap().solution;
        let mw = minimize(&model, &p, &info.eigvec.scaled(-1.0), &opts)
            .unwrap()
            .solution;
        assert!(w.sup_norm() > 0.1);
        let r = mountain_pass(&model, &p, &mw, &w, &MountainPassOptions::default()).unwrap();
        assert!(r.u_star.sup_norm() < 1e-8);
        assert!(r.energy_star.abs() < 1e-12);
    }
}
