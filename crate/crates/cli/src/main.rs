//! `stlgmsr`: evaluate STL robustness, run the verification batteries and
//! reproduce the trajectory-optimization experiments.
//!
//! Exit codes: 0 success (or the expected experiment outcome), 1 property
//! violation, 2 solver failure, 64 usage or input error.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stl_gmsr::robustness::DEFAULT_KAPPA;
use stl_gmsr::{ParamTemplate, Semantics};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "stlgmsr", version, about = "Smooth robustness for Signal Temporal Logic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a formula on a signal CSV and print one JSON line.
    Eval(EvalArgs),
    /// Compare the sign of the generalized-mean semantics against exact
    /// robustness on random instances.
    Fuzz(FuzzArgs),
    /// Compare analytic gradients against central differences on random
    /// instances.
    GradCheck(GradCheckArgs),
    /// Run one of the experiments and write its artifacts.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Args)]
#[group(multiple = false)]
struct SemanticsFlags {
    /// Exact min/max robustness.
    #[arg(long)]
    dsr: bool,
    /// Log-sum-exp smooth robustness with sharpness `--kappa`.
    #[arg(long)]
    dssr: bool,
    /// Generalized-mean smooth robustness (the default).
    #[arg(long)]
    gmsr: bool,
}

#[derive(Debug, Clone, Args)]
struct SmoothingArgs {
    /// Sharpness of the log-sum-exp semantics.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    /// Regularization of the generalized means.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Power-mean exponent.
    #[arg(long, default_value_t = 1)]
    p: u32,
    /// Integer weight of every key-function input.
    #[arg(long, default_value_t = 1)]
    w: u32,
}

impl SmoothingArgs {
    fn template(&self) -> ParamTemplate {
        ParamTemplate {
            eps: self.eps,
            p: self.p,
            w: self.w,
        }
    }

    fn semantics(&self, flags: &SemanticsFlags) -> Semantics {
        if flags.dsr {
            Semantics::Dsr
        } else if flags.dssr {
            Semantics::Dssr { kappa: self.kappa }
        } else {
            Semantics::Dgmsr
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Formula text (e.g. `G[0,2](p0)`), JSON, or a path to a file holding
    /// either.
    #[arg(short, long)]
    formula: String,
    /// Signal CSV with header `t,x1,...,xn` and rows for steps 1..K.
    #[arg(short, long)]
    signal: PathBuf,
    /// 1-based step at which to evaluate.
    #[arg(short, long, default_value_t = 1)]
    k: usize,
    /// JSON object mapping extra predicate names to definitions, e.g.
    /// `{"near": {"kind": "quadratic", "center": [0, 0], "radius": 1}}`.
    /// Component predicates `p0..p{n-1}` (columns x1..xn) always exist.
    #[arg(long)]
    predicates: Option<PathBuf>,
    #[command(flatten)]
    semantics: SemanticsFlags,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    /// Exit 1 when the formula is not satisfied.
    #[arg(long)]
    assert_sat: bool,
    /// Include the gradient (one row per step) in the output.
    #[arg(long)]
    gradient: bool,
}

#[derive(Debug, Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    /// Largest signal length K.
    #[arg(long, default_value_t = 8)]
    max_steps: usize,
    /// Largest signal dimension n.
    #[arg(long, default_value_t = 3)]
    max_dim: usize,
    /// Instances with exact robustness closer to 0 than this are skipped.
    #[arg(long, default_value_t = 1e-6)]
    band: f64,
    /// Directory for counterexample files [env: STLGMSR_OUTDIR, default: .]
    #[arg(long, env = "STLGMSR_OUTDIR", hide_env = true)]
    outdir: Option<PathBuf>,
    /// Replace the semantics under test with a deliberately broken one.
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    SignFlippedAnd,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    /// Log-sum-exp semantics instead of the generalized mean.
    #[arg(long)]
    dssr: bool,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = stl_gmsr::grad::DEFAULT_FD_STEP)]
    h: f64,
    /// Relative error allowed when no visited value is near zero.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Relative error allowed near zeros, where only one derivative exists.
    #[arg(long, default_value_t = 1e-3)]
    relaxed_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DemoName {
    Operators,
    Locality,
    Quadrotor,
}

#[derive(Debug, Args)]
struct DemoArgs {
    name: DemoName,
    #[command(flatten)]
    semantics: SemanticsFlags,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    /// Output directory [env: STLGMSR_OUTDIR, default: .]
    #[arg(long, env = "STLGMSR_OUTDIR", hide_env = true)]
    outdir: Option<PathBuf>,
    /// Override the solver's iteration limit.
    #[arg(long)]
    max_iter: Option<usize>,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<stl_gmsr::Error> for Failure {
    fn from(e: stl_gmsr::Error) -> Self {
        Self::usage(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::Fuzz(a) => commands::fuzz(a),
        Command::GradCheck(a) => commands::grad_check(a),
        Command::Demo(a) => commands::demo(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("stlgmsr: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
