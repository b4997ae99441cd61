//! Config-driven runs: parse a TOML problem file, dispatch to a solver mode
//! and write CSVs, a plain-text report and a gnuplot script.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::Error;
use crate::expr::{parse, Expr};
use crate::functional::{
    jump_errors, minimize, np_residual, transform_np_to_npe, EnergyModel, Impulse,
    ImpulsiveProblem, JumpConvention, MinimizeOptions,
};
use crate::linear::{solve_lp, LinearImpulse, LinearOptions, LinearProblem, SolveReport, TraceRow};
use crate::mountainpass::{
    barrier_radius, check_growth, default_u_samples, find_far_point, mountain_pass,
    GrowthConditions, MountainPassOptions,
};
use crate::space::DirichletSpace;
use crate::timescale::{
    build_mesh, delta_derivative, GridFunction, Segment, TimeScaleMesh, TimeScaleSpec,
};

/// Impulse times must hit a mesh node this closely.
pub const IMPULSE_NODE_TOL: f64 = 1e-12;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Eigen,
    SolveLinear,
    Minimize,
    MountainPass,
    CheckConditions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub timescale: Vec<Segment>,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub impulses: Vec<ImpulseConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub growth: Option<GrowthConditions>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default)]
    pub lambda: f64,
    pub f: Option<String>,
    pub g: Option<String>,
    pub h: Option<String>,
    pub convention: Option<JumpConvention>,
    /// Starting guess for `minimize`, an expression in `t`.
    pub u_init: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseConfig {
    pub t: f64,
    #[serde(rename = "I")]
    pub func: Option<String>,
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub newton: bool,
    pub path_points: usize,
    pub seed: u64,
    pub target_drop: f64,
    /// Node for the far-point search direction (a hat function).
    pub direction_t: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: None,
            max_iters: None,
            newton: false,
            path_points: 41,
            seed: 0,
            target_drop: 1.0,
            direction_t: None,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub allow_noncoercive: bool,
    pub newton: bool,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::OverlappingSegments(_)
            | Error::TooFewPoints(_)
            | Error::InvalidSegment(_)
            | Error::MeshMismatch { .. }
            | Error::IndexOutOfRange { .. }
            | Error::NonPositiveWeight { .. }
            | Error::NotRegressive(_)
            | Error::NonCoercive { .. }
            | Error::BadImpulseNode(_)
            | Error::Config(_)
            | Error::Expr(_) => Failure::Validation(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<crate::expr::ExprError> for Failure {
    fn from(e: crate::expr::ExprError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::Solver(format!("{}: {e}", path.display()))
}

pub fn load_config(path: &Path) -> Result<ProblemConfig, Error> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

/// Runs `mode` and returns the process exit code.
pub fn run(mode: Mode, config_path: &Path, out_dir: &Path, overrides: &Overrides) -> i32 {
    match execute(mode, config_path, out_dir, overrides) {
        Ok(()) => EXIT_OK,
        Err(Failure::Validation(msg)) => {
            log::error!("invalid input: {msg}");
            eprintln!("error: {msg}");
            EXIT_VALIDATION
        }
        Err(Failure::Solver(msg)) => {
            log::error!("solver failed: {msg}");
            eprintln!("error: {msg}");
            EXIT_SOLVER
        }
    }
}

struct Run<'a> {
    mode: Mode,
    cfg: ProblemConfig,
    mesh: TimeScaleMesh,
    out: &'a Path,
    overrides: &'a Overrides,
    report: String,
    files: Vec<&'static str>,
}

fn execute(
    mode: Mode,
    config_path: &Path,
    out_dir: &Path,
    overrides: &Overrides,
) -> Result<(), Failure> {
    let cfg = load_config(config_path)?;
    let mesh = build_mesh(&TimeScaleSpec::new(cfg.timescale.clone()))?;
    fs::create_dir_all(out_dir).map_err(|e| io_fail(out_dir, e))?;
    let mut run = Run {
        mode,
        cfg,
        mesh,
        out: out_dir,
        overrides,
        report: String::new(),
        files: Vec::new(),
    };
    line(&mut run.report, "mode", format!("{mode:?}"));
    line(&mut run.report, "nodes", run.mesh.len());
    line(
        &mut run.report,
        "interval",
        format!("[{}, {}]", run.mesh.start(), run.mesh.end()),
    );
    match mode {
        Mode::Eigen => run.eigen()?,
        Mode::SolveLinear => run.solve_linear()?,
        Mode::Minimize => run.minimize()?,
        Mode::MountainPass => run.mountain_pass()?,
        Mode::CheckConditions => run.check_conditions()?,
    }
    run.finish()
}

fn line(report: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(report, "{key} = {value}");
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Run<'_> {
    fn tol(&self, default: f64) -> f64 {
        self.overrides
            .tol
            .or(self.cfg.solver.tol)
            .unwrap_or(default)
    }

    fn max_iters(&self, default: usize) -> usize {
        self.overrides
            .max_iters
            .or(self.cfg.solver.max_iters)
            .unwrap_or(default)
    }

    fn seed(&self) -> u64 {
        self.overrides.seed.unwrap_or(self.cfg.solver.seed)
    }

    fn write(&mut self, name: &'static str, body: String) -> Result<(), Failure> {
        let path = self.out.join(name);
        fs::write(&path, body).map_err(|e| io_fail(&path, e))?;
        if name.ends_with(".csv") {
            self.files.push(name);
        }
        Ok(())
    }

    fn write_grid(&mut self, name: &'static str, u: &GridFunction) -> Result<(), Failure> {
        let body = solution_csv(&self.mesh, u)?;
        self.write(name, body)
    }

    fn write_trace(&mut self, rows: &[TraceRow]) -> Result<(), Failure> {
        let mut body = String::from("iter,energy,grad_norm,step\n");
        for r in rows {
            let _ = writeln!(
                body,
                "{},{},{},{}",
                r.iter,
                num(r.energy),
                num(r.grad_norm),
                num(r.step)
            );
        }
        self.write("trace.csv", body)
    }

    /// Solver warnings are logged where they arise; this only records them.
    fn warn(&mut self, msg: &str) {
        line(&mut self.report, "warning", msg);
    }

    fn finish(mut self) -> Result<(), Failure> {
        let script = plot_script(&self.files);
        self.write("plot.gp", script)?;
        let report = std::mem::take(&mut self.report);
        print!("{report}");
        self.write("report.txt", report)
    }

    fn node_of(&self, t: f64) -> Result<usize, Failure> {
        match self.mesh.find_node(t, IMPULSE_NODE_TOL) {
            Some(k) if k > 0 && k < self.mesh.gaps() => Ok(k),
            Some(_) => Err(invalid(format!(
                "time {t} is a boundary node; impulses need an interior node"
            ))),
            None => Err(invalid(format!(
                "time {t} is not a mesh node (tolerance {IMPULSE_NODE_TOL:e})"
            ))),
        }
    }

    fn impulse_nodes(&self) -> Result<Vec<usize>, Failure> {
        let nodes: Vec<usize> = self
            .cfg
            .impulses
            .iter()
            .map(|i| self.node_of(i.t))
            .collect::<Result<_, _>>()?;
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != nodes.len() {
            return Err(invalid("two impulses resolve to the same node"));
        }
        Ok(nodes)
    }

    /// Unweighted spectral data, shared by every mode.
    fn spectrum(&mut self) -> Result<(DirichletSpace, f64), Failure> {
        let space = DirichletSpace::assemble(&self.mesh, None)?;
        let info = space.smallest_eigenvalue()?;
        line(&mut self.report, "lambda1", info.lambda1);
        Ok((space, info.lambda1))
    }

    fn eigen(&mut self) -> Result<(), Failure> {
        let space = DirichletSpace::assemble(&self.mesh, None)?;
        let info = space.smallest_eigenvalue()?;
        let emb = space.embedding_constants(256, self.seed());
        line(&mut self.report, "lambda1", info.lambda1);
        line(&mut self.report, "iterations", info.iterations);
        line(&mut self.report, "residual", info.residual);
        line(&mut self.report, "delta", emb.delta);
        line(&mut self.report, "k_emb_sampled", emb.k_emb);
        if let Some(g) = &self.cfg.problem.g {
            let problem = self.nonlinear_problem_with(Some(g.clone()), "0")?;
            let model = transform_np_to_npe(&problem)?;
            self.model_lines(&model);
        }
        let mut body = String::from("iter,lambda,residual\n");
        for (k, lam, res) in &info.trace {
            let _ = writeln!(body, "{},{},{}", k, num(*lam), num(*res));
        }
        self.write("trace.csv", body)?;
        self.write_grid("solution.csv", &info.eigvec)
    }

    fn solve_linear(&mut self) -> Result<(), Failure> {
        let cfg = &self.cfg.problem;
        if cfg.f.is_some() {
            return Err(invalid("solve-linear takes `h`, not `f`"));
        }
        let h_expr = match &cfg.h {
            Some(src) => parse(src)?,
            None => Expr::Num(0.0),
        };
        if h_expr.depends_on_u() {
            return Err(invalid("`h` must depend on t only"));
        }
        let mut h = Vec::with_capacity(self.mesh.len());
        for &t in self.mesh.nodes() {
            h.push(h_expr.eval(t, 0.0).map_err(Error::from)?);
        }
        let nodes = self.impulse_nodes()?;
        let mut impulses = Vec::new();
        for (imp, node) in self.cfg.impulses.iter().zip(nodes) {
            let d = imp.d.ok_or_else(|| {
                invalid(format!(
                    "impulse at t = {} needs a constant `d` in solve-linear",
                    imp.t
                ))
            })?;
            if imp.func.is_some() {
                return Err(invalid("solve-linear impulses take `d`, not `I`"));
            }
            impulses.push(LinearImpulse { node, d });
        }
        let mut impulses_sorted = impulses;
        impulses_sorted.sort_by_key(|i| i.node);
        let lambda = self.cfg.problem.lambda;
        let problem =
            LinearProblem::new(self.mesh.clone(), lambda, GridFunction(h), impulses_sorted)?;
        let (space, lambda1) = self.spectrum()?;
        let opts = LinearOptions {
            allow_noncoercive: self.overrides.allow_noncoercive,
            tol: self.tol(1e-8),
        };
        let r = solve_lp(&problem, &space, lambda1, &opts)?;
        for w in &r.warnings {
            self.warn(w);
        }
        self.report_solve(&r);
        if let Some(p) = r.pivot_ratio {
            line(&mut self.report, "pivot_ratio", p);
        }
        self.write_trace(&r.trace)?;
        self.write_grid("solution.csv", &r.solution)?;
        if !r.converged {
            return Err(Failure::Solver(format!(
                "weak residual {} above tolerance",
                r.weak_residual
            )));
        }
        Ok(())
    }

    fn report_solve(&mut self, r: &SolveReport) {
        line(&mut self.report, "energy", r.energy);
        line(&mut self.report, "weak_residual", r.weak_residual);
        line(&mut self.report, "classical_residual", r.classical_residual);
        for (k, e) in r.jump_errors.iter().enumerate() {
            line(&mut self.report, &format!("jump_error[{k}]"), e);
        }
        line(&mut self.report, "iterations", r.iterations);
        line(&mut self.report, "converged", r.converged);
    }

    fn nonlinear_problem_with(
        &self,
        g: Option<String>,
        f_default: &str,
    ) -> Result<ImpulsiveProblem, Failure> {
        let cfg = &self.cfg.problem;
        let f = parse(cfg.f.as_deref().unwrap_or(f_default))?;
        let g = g.as_deref().map(parse).transpose()?;
        let convention = cfg.convention.unwrap_or(if g.is_some() {
            JumpConvention::Minus
        } else {
            JumpConvention::Plus
        });
        let nodes = self.impulse_nodes()?;
        let mut impulses = Vec::new();
        for (imp, node) in self.cfg.impulses.iter().zip(nodes) {
            let func = match (&imp.func, imp.d) {
                (Some(src), None) => parse(src)?,
                (None, Some(d)) => Expr::Num(d),
                _ => {
                    return Err(invalid(format!(
                        "impulse at t = {} needs exactly one of `I` or `d`",
                        imp.t
                    )))
                }
            };
            impulses.push(Impulse { node, func });
        }
        impulses.sort_by_key(|i| i.node);
        Ok(ImpulsiveProblem::new(
            self.mesh.clone(),
            cfg.lambda,
            f,
            impulses,
            g,
            convention,
        )?)
    }

    fn nonlinear_problem(&self) -> Result<ImpulsiveProblem, Failure> {
        if self.cfg.problem.h.is_some() {
            return Err(invalid(format!("{:?} takes `f`, not `h`", self.mode)));
        }
        if self.cfg.problem.f.is_none() {
            return Err(invalid(format!("{:?} needs `f`", self.mode)));
        }
        self.nonlinear_problem_with(self.cfg.problem.g.clone(), "0")
    }

    fn model_lines(&mut self, model: &EnergyModel) {
        line(&mut self.report, "m", model.m);
        line(&mut self.report, "M", model.big_m);
        line(&mut self.report, "alpha", model.bound_alpha);
        line(&mut self.report, "beta", model.bound_beta);
        line(&mut self.report, "delta", model.delta);
        line(&mut self.report, "lambda_bound", model.lambda_bound);
    }

    fn model(&mut self, problem: &ImpulsiveProblem) -> Result<EnergyModel, Failure> {
        let model = transform_np_to_npe(problem)?;
        line(&mut self.report, "lambda1", model.lambda1);
        self.model_lines(&model);
        for w in model.warnings.clone() {
            self.warn(&w);
        }
        if !model.lambda_bound_satisfied {
            let msg = format!(
                "lambda = {} <= -m lambda1 / M = {}",
                problem.lambda, model.lambda_bound
            );
            log::warn!("{msg}");
            self.warn(&msg);
        }
        Ok(model)
    }

    fn minimize_opts(&self) -> MinimizeOptions {
        MinimizeOptions {
            tol: self.tol(1e-8),
            max_iters: self.max_iters(10_000),
            newton: self.overrides.newton || self.cfg.solver.newton,
            ..Default::default()
        }
    }

    fn critical_point_lines(
        &mut self,
        prefix: &str,
        model: &EnergyModel,
        problem: &ImpulsiveProblem,
        u: &GridFunction,
    ) -> Result<(), Failure> {
        let grad = crate::functional::gradient(model, problem, u)?.sup_norm();
        line(
            &mut self.report,
            &format!("{prefix}energy"),
            crate::functional::energy(model, problem, u)?,
        );
        line(&mut self.report, &format!("{prefix}weak_residual"), grad);
        line(
            &mut self.report,
            &format!("{prefix}norm"),
            model.space.h1_norm(u)?,
        );
        if self.mesh.is_purely_discrete() {
            line(
                &mut self.report,
                &format!("{prefix}np_residual"),
                np_residual(problem, u)?,
            );
        }
        for (k, e) in jump_errors(model, problem, u)?.iter().enumerate() {
            line(&mut self.report, &format!("{prefix}jump_error[{k}]"), e);
        }
        Ok(())
    }

    fn minimize(&mut self) -> Result<(), Failure> {
        let problem = self.nonlinear_problem()?;
        let model = self.model(&problem)?;
        let u_init = match &self.cfg.problem.u_init {
            Some(src) => {
                let e = parse(src)?;
                let mut v = Vec::with_capacity(self.mesh.len());
                for &t in self.mesh.nodes() {
                    v.push(e.eval(t, 0.0).map_err(Error::from)?);
                }
                let n = v.len();
                v[0] = 0.0;
                v[n - 1] = 0.0;
                GridFunction(v)
            }
            None => self.mesh.zeros(),
        };
        let result = minimize(&model, &problem, &u_init, &self.minimize_opts());
        let r = result?;
        for w in &r.warnings {
            self.warn(w);
        }
        line(&mut self.report, "iterations", r.iterations);
        line(&mut self.report, "converged", r.converged);
        self.critical_point_lines("", &model, &problem, &r.solution)?;
        self.write_trace(&r.trace)?;
        self.write_grid("solution.csv", &r.solution)
    }

    fn mountain_pass(&mut self) -> Result<(), Failure> {
        let problem = self.nonlinear_problem()?;
        let model = self.model(&problem)?;
        let u0 = minimize(&model, &problem, &self.mesh.zeros(), &self.minimize_opts())?.solution;

        let dir_node = match self.cfg.solver.direction_t {
            Some(t) => self.node_of(t)?,
            None => problem
                .impulses
                .first()
                .map(|i| i.node)
                .unwrap_or(self.mesh.gaps() / 2),
        };
        let mut direction = self.mesh.zeros();
        direction.0[dir_node] = 1.0;
        let far = find_far_point(&model, &problem, &direction, self.cfg.solver.target_drop)?;
        line(&mut self.report, "far_point_scale", far.scale);
        line(&mut self.report, "far_point_energy", far.energy);
        let u1 = u0.axpy(1.0, &far.u1);

        let opts = MountainPassOptions {
            path_points: self.cfg.solver.path_points,
            tol: self.tol(1e-6),
            max_iters: self.max_iters(5_000),
            growth: self.cfg.growth,
            seed: self.seed(),
            ..Default::default()
        };
        let r = mountain_pass(&model, &problem, &u0, &u1, &opts)?;
        for w in &r.warnings {
            self.warn(w);
        }
        if let Some(rho) = r.rho0 {
            line(&mut self.report, "rho0", rho);
            if rho < far.scale {
                line(&mut self.report, "far_point_outside_sphere", true);
            }
        }
        if let Some(e) = r.sphere_min_energy {
            line(&mut self.report, "sphere_min_energy", e);
        }
        if let Some(b) = r.barrier_observed {
            line(&mut self.report, "barrier_observed", b);
        }
        line(&mut self.report, "iterations", r.iterations);
        line(&mut self.report, "polished", r.polished);
        line(&mut self.report, "ps_spread", r.ps_spread);
        line(&mut self.report, "solutions", 2);
        self.critical_point_lines("u0_", &model, &problem, &u0)?;
        self.critical_point_lines("ustar_", &model, &problem, &r.u_star)?;
        line(&mut self.report, "ustar_grad_norm", r.grad_norm);
        line(
            &mut self.report,
            "distance_u0_ustar",
            model.space.h1_norm(&r.u_star.axpy(-1.0, &u0))?,
        );

        let mut path = String::from("k,energy\n");
        for (k, e) in r.path_energies.iter().enumerate() {
            let _ = writeln!(path, "{},{}", k, num(*e));
        }
        self.write("path.csv", path)?;
        self.write_trace(&r.trace)?;
        self.write_grid("u0.csv", &u0)?;
        self.write_grid("u1.csv", &u1)?;
        self.write_grid("ustar.csv", &r.u_star)?;
        self.write_grid("solution.csv", &r.u_star)
    }

    fn check_conditions(&mut self) -> Result<(), Failure> {
        let problem = self.nonlinear_problem()?;
        let gc = self
            .cfg
            .growth
            .ok_or_else(|| invalid("check-conditions needs a [growth] section"))?;
        gc.validate()?;
        let ts = self.mesh.nodes()[1..self.mesh.gaps()].to_vec();
        let rep = check_growth(&problem, &gc, &ts, &default_u_samples())?;
        let mut body = String::from("condition,kind,value,pass\n");
        let mut row = |name: &str, kind: &str, v: f64, pass: bool| {
            let _ = writeln!(body, "{name},{kind},{},{pass}", num(v));
        };
        row(
            "H1_f_margin",
            "sampled",
            rep.h1_margin,
            rep.h1_margin >= -crate::mountainpass::H1_REL_TOL,
        );
        for (k, m) in rep.h1_impulse_margins.iter().enumerate() {
            row(
                &format!("H1_I{k}_margin"),
                "sampled",
                *m,
                *m >= -crate::mountainpass::H1_REL_TOL,
            );
        }
        row(
            "H1_positivity_violations",
            "sampled",
            rep.h1_positivity_violations as f64,
            rep.h1_positivity_violations == 0,
        );
        row("H2_tail_ratio", "heuristic", rep.h2_tail_ratio, rep.h2_pass);
        row("H3_head_ratio", "heuristic", rep.h3_head_ratio, rep.h3_pass);
        self.write("conditions.csv", body)?;

        line(
            &mut self.report,
            "H1",
            if rep.h1_pass { "pass" } else { "fail" },
        );
        line(&mut self.report, "H1_margin", rep.h1_margin);
        line(
            &mut self.report,
            "H2 (heuristic)",
            if rep.h2_pass { "pass" } else { "fail" },
        );
        line(
            &mut self.report,
            "H3 (heuristic)",
            if rep.h3_pass { "pass" } else { "fail" },
        );
        let model = self.model(&problem)?;
        match barrier_radius(&model, &problem, &gc) {
            Ok(rho) => line(&mut self.report, "rho0", rho),
            Err(e) => self.warn(&e.to_string()),
        }
        Ok(())
    }
}

/// `t,u,u_delta` with the delta derivative left empty on the last node.
pub fn solution_csv(mesh: &TimeScaleMesh, u: &GridFunction) -> Result<String, Error> {
    let du = delta_derivative(mesh, u)?;
    let mut out = String::from("t,u,u_delta\n");
    for (i, t) in mesh.nodes().iter().enumerate() {
        let d = if i < du.len() {
            num(du[i])
        } else {
            String::new()
        };
        let _ = writeln!(out, "{},{},{}", num(*t), num(u[i]), d);
    }
    Ok(out)
}

fn plot_script(files: &[&str]) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n");
    for f in files.iter().filter(|f| **f != "conditions.csv") {
        let stem = f.trim_end_matches(".csv");
        let _ = writeln!(s, "set output '{stem}.png'");
        if *f == "trace.csv" {
            let _ = writeln!(
                s,
                "set logscale y\nplot '{f}' using 1:3 with lines\nunset logscale y"
            );
        } else {
            let _ = writeln!(s, "plot '{f}' using 1:2 with linespoints");
        }
    }
    s
}
