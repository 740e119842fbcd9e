//! Planar reach problem that defeats log-sum-exp smoothing: the node nearest
//! the target circle on the initial guess cannot enter it, so a gradient that
//! concentrates on that node stalls.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::predicate::{PredicateDef, PredicateTable};
use super::ExperimentVerdict;
use crate::robustness::{eval, Semantics, DEFAULT_KAPPA};
use crate::scp::{BoundaryCondition, DiscreteLinear, OcpProblem, PathConstraint, StlTerm, Trajectory, Var};
use crate::stl::{assign_params, Formula, Interval, ParamTemplate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityParams {
    pub nodes: usize,
    pub u_max: f64,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub center: [f64; 2],
    pub radius: f64,
}

impl Default for LocalityParams {
    fn default() -> Self {
        Self {
            nodes: 9,
            u_max: 1.5,
            start: [0.0, 0.0],
            goal: [8.0, 0.0],
            center: [1.0, 2.0],
            radius: 0.5,
        }
    }
}

impl LocalityParams {
    /// `F[0, K-1] (r - ||x - c|| >= 0)` at step 1, with its predicate table.
    pub fn formula(&self) -> Result<(Formula, PredicateTable)> {
        let mut table = PredicateTable::new();
        let reach = table.insert(PredicateDef::ball("reach", 0, self.center.to_vec(), self.radius));
        let f = Formula::eventually(Interval::new(0, self.nodes - 1)?, Formula::predicate(reach));
        let f = assign_params(&f, &ParamTemplate::default(), &BTreeMap::new())?;
        Ok((f, table))
    }

    /// Evenly spaced nodes on the segment from `start` to `goal`, with the
    /// matching constant inputs.
    pub fn straight_line(&self) -> Result<Trajectory> {
        let n = self.nodes;
        let du = [
            (self.goal[0] - self.start[0]) / (n - 1) as f64,
            (self.goal[1] - self.start[1]) / (n - 1) as f64,
        ];
        let states = (0..n)
            .flat_map(|k| [self.start[0] + k as f64 * du[0], self.start[1] + k as f64 * du[1]])
            .collect();
        Trajectory::new(n, 2, 2, states, du.repeat(n))
    }

    /// Indices (1-based) of nodes strictly inside the circle.
    pub fn nodes_inside(&self, z: &Trajectory) -> Vec<usize> {
        (1..=z.nodes)
            .filter(|&k| {
                let x = z.x(k);
                ((x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2)).sqrt() < self.radius
            })
            .collect()
    }
}

/// Semantics name accepted by the builders: the log-sum-exp run uses the
/// default sharpness.
pub fn locality_semantics(gmsr: bool) -> Semantics {
    if gmsr {
        Semantics::Dgmsr
    } else {
        Semantics::Dssr { kappa: DEFAULT_KAPPA }
    }
}

/// `x_{k+1} = x_k + u_k`, `||u_k|| <= u_max`, fixed endpoints, maximize the
/// reach robustness.
pub fn build_locality(params: &LocalityParams, semantics: Semantics) -> Result<OcpProblem> {
    let (formula, predicates) = params.formula()?;
    let dynamics = DiscreteLinear {
        a: DMatrix::identity(2, 2),
        b: DMatrix::identity(2, 2),
        b_plus: DMatrix::zeros(2, 2),
    };
    Ok(OcpProblem {
        name: "locality".into(),
        discretization: Arc::new(dynamics),
        nodes: params.nodes,
        dt: 1.0,
        boundary: vec![
            BoundaryCondition {
                var: Var::State,
                node: 1,
                value: params.start.to_vec(),
            },
            BoundaryCondition {
                var: Var::State,
                node: params.nodes,
                value: params.goal.to_vec(),
            },
        ],
        path: vec![PathConstraint::Ball {
            var: Var::Input,
            first: 0,
            center: vec![0.0, 0.0],
            radius: params.u_max,
        }],
        objective: Some(StlTerm {
            formula,
            predicates,
            step: 1,
            semantics,
        }),
        stl_constraints: Vec::new(),
        defect_weight: 1e3,
        stl_weight: 1e3,
    })
}

/// Properties of a solved locality trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityCheck {
    pub dsr_value: f64,
    pub gmsr_value: f64,
    /// Value under the semantics the problem was solved with.
    pub objective_value: f64,
    pub nodes_inside: Vec<usize>,
    pub constraint_violation: f64,
    pub defect_l1: f64,
}

impl LocalityCheck {
    /// Exact robustness nonnegative with at least one node strictly inside.
    pub fn satisfied(&self) -> bool {
        self.dsr_value >= 0.0 && !self.nodes_inside.is_empty()
    }

    pub fn verdict(&self, tol: f64) -> ExperimentVerdict {
        ExperimentVerdict {
            dsr_value: self.dsr_value,
            gmsr_value: self.gmsr_value,
            satisfied: self.satisfied(),
            constraints_ok: self.constraint_violation <= tol && self.defect_l1 <= tol,
        }
    }
}

pub fn check_locality(params: &LocalityParams, problem: &OcpProblem, z: &Trajectory) -> Result<LocalityCheck> {
    let signal = z.signal()?;
    let term = problem.objective.as_ref().expect("locality has an objective");
    Ok(LocalityCheck {
        dsr_value: eval(&term.formula, &term.predicates, &signal, term.step, Semantics::Dsr)?,
        gmsr_value: eval(&term.formula, &term.predicates, &signal, term.step, Semantics::Dgmsr)?,
        objective_value: term.value(&signal)?,
        nodes_inside: params.nodes_inside(z),
        constraint_violation: problem.constraint_violation(z),
        defect_l1: problem.evaluate(z)?.defect_l1,
    })
}
