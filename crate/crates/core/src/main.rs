use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use impulse_ts::cli::{run, Mode, Overrides};

/// Variational solvers for impulsive Dirichlet problems on time scales.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    #[arg(value_enum)]
    mode: Mode,
    /// Problem file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Gradient-norm tolerance (overrides [solver].tol)
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap (overrides [solver].max_iters)
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed for sampled diagnostics (overrides [solver].seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Solve linear problems even when the form is not coercive.
    #[arg(long)]
    allow_noncoercive: bool,
    /// Use Newton steps in the minimizer.
    #[arg(long)]
    newton: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let overrides = Overrides {
        tol: args.tol,
        max_iters: args.max_iters,
        seed: args.seed,
        allow_noncoercive: args.allow_noncoercive,
        newton: args.newton,
    };
    let code = run(args.mode, &args.config, &args.out, &overrides);
    ExitCode::from(code as u8)
}
