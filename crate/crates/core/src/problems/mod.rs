//! Problem instances: operator ascent demos, the planar locality example and
//! the quadrotor charging-station flight.

pub mod locality;
pub mod operators;
pub mod quadrotor;
pub mod until;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::robustness::Semantics;
use crate::scp::{prox_linear_solve, OcpProblem, ScpConfig, ScpReport, Trajectory};

pub use locality::{build_locality, check_locality, locality_semantics, LocalityCheck, LocalityParams};
pub use operators::{max_masked_weight, moves_only_side, operator_demo, AscentTrace, DemoKind, DEMO_ITERATIONS, DEMO_STEP, MIXED_INIT};
pub use quadrotor::{build_quadrotor, check_quadrotor, PointMassDrag, QuadrotorCheck, QuadrotorParams};
pub use until::{build_until_spec, build_until_spec_with, staged_until_value};

/// Summary written next to every experiment's artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentVerdict {
    pub dsr_value: f64,
    pub gmsr_value: f64,
    pub satisfied: bool,
    pub constraints_ok: bool,
}

/// A solved experiment: the problem, the final iterate, the solver report
/// and the experiment-specific checks.
#[derive(Debug, Clone)]
pub struct Solved<C> {
    pub problem: OcpProblem,
    pub trajectory: Trajectory,
    pub report: ScpReport,
    pub check: C,
}

/// Solver settings for the locality example.
pub fn locality_config() -> ScpConfig {
    ScpConfig::default()
}

/// Solver settings for the quadrotor: the defect penalty starts at 10 and
/// grows to the problem's weight, and subproblems are solved to 1e-6.
pub fn quadrotor_config() -> ScpConfig {
    let mut config = ScpConfig {
        max_iter: 500,
        penalty_init: Some(10.0),
        ..ScpConfig::default()
    };
    config.qp.tol = 1e-6;
    config.qp.max_iter = 5000;
    config
}

/// Solves the locality example from the straight-line guess.
pub fn solve_locality(params: &LocalityParams, semantics: Semantics, config: &ScpConfig) -> Result<Solved<LocalityCheck>> {
    let problem = build_locality(params, semantics)?;
    let (trajectory, report) = prox_linear_solve(&problem, &params.straight_line()?, config)?;
    let check = check_locality(params, &problem, &trajectory)?;
    Ok(Solved {
        problem,
        trajectory,
        report,
        check,
    })
}

/// Solves the quadrotor flight from its straight-line guess.
pub fn solve_quadrotor(params: &QuadrotorParams, config: &ScpConfig) -> Result<Solved<QuadrotorCheck>> {
    let problem = build_quadrotor(params)?;
    let (trajectory, report) = prox_linear_solve(&problem, &params.initial_guess()?, config)?;
    let check = check_quadrotor(params, &problem, &trajectory)?;
    Ok(Solved {
        problem,
        trajectory,
        report,
        check,
    })
}
