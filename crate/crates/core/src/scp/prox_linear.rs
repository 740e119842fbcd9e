//! Prox-linear outer loop with adaptive prox weight.

use serde::{Deserialize, Serialize};

use super::problem::{OcpProblem, Trajectory};
use super::qp::{solve_qp, QpSettings, QpStatus};
use super::subproblem::build_subproblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScpConfig {
    pub sigma0: f64,
    pub gamma_inc: f64,
    pub gamma_dec: f64,
    /// Minimum ratio of actual to predicted merit decrease for acceptance.
    pub eta1: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub max_iter: usize,
    /// Stop once an accepted step has `||dz||_inf` at most this ...
    pub tol_step: f64,
    /// ... and the dynamics defect l1 norm is at most this.
    pub tol_dyn: f64,
    /// Starting l1 defect weight. When set below the problem's weight, the
    /// weight is multiplied by `penalty_growth` after every accepted step
    /// shorter than `penalty_step_tol` until it reaches the problem's weight.
    pub penalty_init: Option<f64>,
    pub penalty_growth: f64,
    pub penalty_step_tol: f64,
    pub qp: QpSettings,
}

impl Default for ScpConfig {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            gamma_inc: 2.0,
            gamma_dec: 1.5,
            eta1: 0.1,
            sigma_min: 1e-4,
            sigma_max: 1e8,
            max_iter: 300,
            tol_step: 1e-6,
            tol_dyn: 1e-6,
            penalty_init: None,
            penalty_growth: 10.0,
            penalty_step_tol: 1e-3,
            qp: QpSettings::default(),
        }
    }
}

/// Iterate of the prox-linear loop.
#[derive(Debug, Clone)]
pub struct ScpState {
    pub z: Trajectory,
    pub sigma: f64,
    /// l1 penalty weight on dynamics defects.
    pub lambda: f64,
    pub iteration: usize,
    pub merit_history: Vec<f64>,
}

/// One subproblem solve: values at the iterate it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub merit: f64,
    /// Objective robustness at the iterate (`null` without an objective).
    pub robustness: Option<f64>,
    pub defect_l1: f64,
    pub sigma: f64,
    pub accepted: bool,
    #[serde(skip)]
    pub lambda: f64,
    #[serde(skip)]
    pub step_inf: f64,
    #[serde(skip)]
    pub qp_status: Option<QpStatus>,
    #[serde(skip)]
    pub qp_iterations: usize,
    #[serde(skip)]
    pub qp_primal_residual: f64,
    #[serde(skip)]
    pub qp_dual_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScpStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpReport {
    pub status: ScpStatus,
    pub iterations: usize,
    pub rejected: usize,
    pub merit: f64,
    pub robustness: Option<f64>,
    pub defect_l1: f64,
    pub sigma: f64,
    pub history: Vec<IterationRecord>,
}

impl ScpReport {
    pub fn converged(&self) -> bool {
        self.status == ScpStatus::Converged
    }
}

/// Runs the prox-linear method from `z_init`. The returned trajectory is the
/// last accepted iterate, which has the lowest merit seen.
pub fn prox_linear_solve(
    problem: &OcpProblem,
    z_init: &Trajectory,
    config: &ScpConfig,
) -> Result<(Trajectory, ScpReport)> {
    problem.validate()?;
    if !(config.sigma_min > 0.0 && config.sigma_min <= config.sigma0 && config.sigma0 <= config.sigma_max) {
        return Err(Error::InvalidParams("need 0 < sigma_min <= sigma0 <= sigma_max".into()));
    }
    let lambda_final = problem.defect_weight;
    let lambda0 = config.penalty_init.unwrap_or(lambda_final).min(lambda_final);
    if !(lambda0 > 0.0 && config.penalty_growth > 1.0) {
        return Err(Error::InvalidParams("need a positive initial penalty and growth > 1".into()));
    }
    let mut stage = problem.clone();
    stage.defect_weight = lambda0;
    let problem = &mut stage;
    let mut state = ScpState {
        z: z_init.clone(),
        sigma: config.sigma0,
        lambda: lambda0,
        iteration: 0,
        merit_history: Vec::new(),
    };
    let mut current = problem.evaluate(&state.z)?;
    let mut lin = problem.linearize(&state.z)?;
    let mut history = Vec::new();
    let mut rejected = 0;
    let mut status = ScpStatus::MaxIter;
    while state.iteration < config.max_iter {
        state.iteration += 1;
        state.merit_history.push(current.merit);
        let qp = build_subproblem(problem, &state.z, state.sigma, &lin)?;
        let sol = solve_qp(&qp, &config.qp)?;
        let step = &sol.x.as_slice()[..state.z.num_vars()];
        let step_inf = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut record = IterationRecord {
            merit: current.merit,
            robustness: current.objective,
            defect_l1: current.defect_l1,
            sigma: state.sigma,
            accepted: false,
            lambda: state.lambda,
            step_inf,
            qp_status: Some(sol.status),
            qp_iterations: sol.iterations,
            qp_primal_residual: sol.primal_residual,
            qp_dual_residual: sol.dual_residual,
        };
        if sol.status != QpStatus::Solved {
            rejected += 1;
            state.sigma = (state.sigma * config.gamma_inc).min(config.sigma_max);
            history.push(record);
            continue;
        }
        let candidate = state.z.shifted(step);
        let trial = match problem.evaluate(&candidate) {
            Ok(e) => Some(e),
            Err(Error::Divergence { .. }) => None,
            Err(e) => return Err(e),
        };
        let predicted = current.merit - problem.model_merit(&lin, &state.z, step);
        // An iterate that violates the convex constraints cannot keep the
        // zero step, so the model decrease may be negative; take the
        // restoring step unconditionally.
        let restoring = problem.constraint_violation(&state.z) > 10.0 * config.qp.tol;
        let accept = trial.as_ref().is_some_and(|t| {
            let actual = current.merit - t.merit;
            restoring || (actual >= config.eta1 * predicted && actual >= 0.0)
        });
        if accept {
            record.accepted = true;
            history.push(record);
            state.z = candidate;
            current = trial.expect("accepted trial was evaluated");
            state.sigma = (state.sigma / config.gamma_dec).max(config.sigma_min);
            let final_stage = state.lambda >= lambda_final;
            if final_stage && step_inf <= config.tol_step && current.defect_l1 <= config.tol_dyn {
                status = ScpStatus::Converged;
                break;
            }
            if !final_stage && step_inf <= config.penalty_step_tol {
                state.lambda = (state.lambda * config.penalty_growth).min(lambda_final);
                problem.defect_weight = state.lambda;
                current = problem.evaluate(&state.z)?;
            }
            lin = problem.linearize(&state.z)?;
        } else {
            history.push(record);
            // Once the step is this small the model is exact to working
            // precision; a rejection here means the iterate is stationary.
            if state.lambda >= lambda_final && step_inf <= config.tol_step && current.defect_l1 <= config.tol_dyn {
                status = ScpStatus::Converged;
                break;
            }
            rejected += 1;
            state.sigma = (state.sigma * config.gamma_inc).min(config.sigma_max);
        }
    }
    let report = ScpReport {
        status,
        iterations: state.iteration,
        rejected,
        merit: current.merit,
        robustness: current.objective,
        defect_l1: current.defect_l1,
        sigma: state.sigma,
        history,
    };
    Ok((state.z, report))
}
