//! Optimal control problems over a fixed grid of nodes.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::discretize::{Discretization, StepSensitivity};
use crate::error::{Error, Result};
use crate::grad::grad_eval;
use crate::par;
use crate::predicate::PredicateTable;
use crate::robustness::{eval, Semantics};
use crate::signal::Signal;
use crate::stl::Formula;

/// Which block of the decision vector a constraint acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Var {
    State,
    Input,
}

/// Pins the full state or input vector at one 1-based node.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    pub var: Var,
    pub node: usize,
    pub value: Vec<f64>,
}

/// Convex constraint imposed at every node on the components `first..first + len`
/// of the state or input.
#[derive(Debug, Clone, PartialEq)]
pub enum PathConstraint {
    /// `||v - center|| <= radius`
    Ball {
        var: Var,
        first: usize,
        center: Vec<f64>,
        radius: f64,
    },
    /// `||v|| cos(half_angle) <= v[axis]`, equivalently
    /// `||v without v[axis]|| <= tan(half_angle) v[axis]`.
    Cone {
        var: Var,
        first: usize,
        len: usize,
        axis: usize,
        half_angle: f64,
    },
    /// `lo <= v[first] <= hi`
    Bounds {
        var: Var,
        first: usize,
        lo: f64,
        hi: f64,
    },
}

impl PathConstraint {
    pub fn var(&self) -> Var {
        match self {
            PathConstraint::Ball { var, .. }
            | PathConstraint::Cone { var, .. }
            | PathConstraint::Bounds { var, .. } => *var,
        }
    }

    pub fn first(&self) -> usize {
        match self {
            PathConstraint::Ball { first, .. }
            | PathConstraint::Cone { first, .. }
            | PathConstraint::Bounds { first, .. } => *first,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PathConstraint::Ball { center, .. } => center.len(),
            PathConstraint::Cone { len, .. } => *len,
            PathConstraint::Bounds { .. } => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Violation of the constraint by the sub-vector `v` (0 when satisfied).
    pub fn violation(&self, v: &[f64]) -> f64 {
        match self {
            PathConstraint::Ball { center, radius, .. } => {
                let d = v.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                (d - radius).max(0.0)
            }
            PathConstraint::Cone { axis, half_angle, .. } => {
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                (norm * half_angle.cos() - v[*axis]).max(0.0)
            }
            PathConstraint::Bounds { lo, hi, .. } => (lo - v[0]).max(v[0] - hi).max(0.0),
        }
    }
}

/// An STL robustness term over the state signal.
#[derive(Debug, Clone)]
pub struct StlTerm {
    pub formula: Formula,
    pub predicates: PredicateTable,
    /// Step at which the formula is evaluated.
    pub step: usize,
    pub semantics: Semantics,
}

impl StlTerm {
    pub fn value(&self, signal: &Signal) -> Result<f64> {
        eval(&self.formula, &self.predicates, signal, self.step, self.semantics)
    }

    pub fn value_as(&self, signal: &Signal, semantics: Semantics) -> Result<f64> {
        eval(&self.formula, &self.predicates, signal, self.step, semantics)
    }

    pub fn linearize(&self, signal: &Signal) -> Result<(f64, Vec<f64>)> {
        let out = grad_eval(&self.formula, &self.predicates, signal, self.step, self.semantics)?;
        Ok((out.value, out.gradient))
    }
}

/// States and inputs at every node, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: usize,
    pub nx: usize,
    pub nu: usize,
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl Trajectory {
    pub fn new(nodes: usize, nx: usize, nu: usize, states: Vec<f64>, inputs: Vec<f64>) -> Result<Self> {
        if states.len() != nodes * nx || inputs.len() != nodes * nu {
            return Err(Error::Dimension(format!(
                "trajectory needs {} state and {} input entries, got {} and {}",
                nodes * nx,
                nodes * nu,
                states.len(),
                inputs.len()
            )));
        }
        Ok(Self {
            nodes,
            nx,
            nu,
            states,
            inputs,
        })
    }

    /// State at 1-based node `k`.
    pub fn x(&self, k: usize) -> &[f64] {
        &self.states[(k - 1) * self.nx..k * self.nx]
    }

    pub fn u(&self, k: usize) -> &[f64] {
        &self.inputs[(k - 1) * self.nu..k * self.nu]
    }

    pub fn get(&self, var: Var, k: usize) -> &[f64] {
        match var {
            Var::State => self.x(k),
            Var::Input => self.u(k),
        }
    }

    pub fn signal(&self) -> Result<Signal> {
        Signal::new(self.nodes, self.nx, self.states.clone())
    }

    pub fn num_vars(&self) -> usize {
        self.states.len() + self.inputs.len()
    }

    /// `self + step`, where `step` is laid out as all states then all inputs.
    pub fn shifted(&self, step: &[f64]) -> Trajectory {
        let (dx, du) = step.split_at(self.states.len());
        Trajectory {
            states: self.states.iter().zip(dx).map(|(a, b)| a + b).collect(),
            inputs: self.inputs.iter().zip(&du[..self.inputs.len()]).map(|(a, b)| a + b).collect(),
            ..self.clone()
        }
    }
}

/// Merit ingredients at one iterate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: Option<f64>,
    pub constraints: Vec<f64>,
    /// `F_k(x_k, u_k, u_{k+1}) - x_{k+1}` for `k = 1..K-1`.
    pub defects: Vec<DVector<f64>>,
    pub defect_l1: f64,
    pub merit: f64,
}

/// Data needed to build the convex subproblem at an iterate.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub steps: Vec<StepSensitivity>,
    pub defects: Vec<DVector<f64>>,
    pub objective: Option<(f64, Vec<f64>)>,
    pub constraints: Vec<(f64, Vec<f64>)>,
}

/// A trajectory optimization problem: maximize an STL robustness objective
/// (or satisfy STL constraints) subject to discretized dynamics, boundary
/// conditions and convex path constraints.
#[derive(Clone)]
pub struct OcpProblem {
    pub name: String,
    pub discretization: Arc<dyn Discretization>,
    pub nodes: usize,
    /// Time between nodes.
    pub dt: f64,
    pub boundary: Vec<BoundaryCondition>,
    pub path: Vec<PathConstraint>,
    pub objective: Option<StlTerm>,
    pub stl_constraints: Vec<StlTerm>,
    /// l1 penalty weight on dynamics defects.
    pub defect_weight: f64,
    /// Hinge penalty weight on violated STL constraints.
    pub stl_weight: f64,
}

impl std::fmt::Debug for OcpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpProblem")
            .field("name", &self.name)
            .field("nodes", &self.nodes)
            .field("nx", &self.nx())
            .field("nu", &self.nu())
            .finish_non_exhaustive()
    }
}

impl OcpProblem {
    pub fn nx(&self) -> usize {
        self.discretization.state_dim()
    }

    pub fn nu(&self) -> usize {
        self.discretization.input_dim()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| i as f64 * self.dt).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nu) = (self.nx(), self.nu());
        if self.nodes < 2 {
            return Err(Error::Dimension("a problem needs at least two nodes".into()));
        }
        for bc in &self.boundary {
            let dim = if bc.var == Var::State { nx } else { nu };
            if bc.node < 1 || bc.node > self.nodes || bc.value.len() != dim {
                return Err(Error::Dimension(format!("boundary condition {bc:?} does not fit")));
            }
        }
        for pc in &self.path {
            let dim = if pc.var() == Var::State { nx } else { nu };
            if pc.first() + pc.len() > dim {
                return Err(Error::Dimension(format!("path constraint {pc:?} exceeds dimension {dim}")));
            }
            if let PathConstraint::Cone { axis, len, .. } = pc {
                if axis >= len {
                    return Err(Error::Dimension(format!("cone axis {axis} outside {len} components")));
                }
            }
        }
        Ok(())
    }

    fn check_trajectory(&self, z: &Trajectory) -> Result<()> {
        if z.nodes != self.nodes || z.nx != self.nx() || z.nu != self.nu() {
            return Err(Error::Dimension(format!(
                "trajectory is {}x({}+{}), problem is {}x({}+{})",
                z.nodes,
                z.nx,
                z.nu,
                self.nodes,
                self.nx(),
                self.nu()
            )));
        }
        Ok(())
    }

    /// Shooting step from every node but the last, in parallel.
    pub fn shoot(&self, z: &Trajectory) -> Result<Vec<StepSensitivity>> {
        self.check_trajectory(z)?;
        par::map_indices(self.nodes - 1, |i| {
            let k = i + 1;
            self.discretization.step(
                k,
                &DVector::from_column_slice(z.x(k)),
                &DVector::from_column_slice(z.u(k)),
                &DVector::from_column_slice(z.u(k + 1)),
            )
        })
        .into_iter()
        .collect()
    }

    fn defects_of(steps: &[StepSensitivity], z: &Trajectory) -> Vec<DVector<f64>> {
        steps
            .iter()
            .enumerate()
            .map(|(i, s)| &s.next - DVector::from_column_slice(z.x(i + 2)))
            .collect()
    }

    fn merit_of(&self, objective: Option<f64>, constraints: &[f64], defect_l1: f64) -> f64 {
        -objective.unwrap_or(0.0)
            + self.defect_weight * defect_l1
            + self.stl_weight * constraints.iter().map(|g| (-g).max(0.0)).sum::<f64>()
    }

    /// Exact (nonlinear) merit and its ingredients.
    pub fn evaluate(&self, z: &Trajectory) -> Result<Evaluation> {
        let steps = self.shoot(z)?;
        let defects = Self::defects_of(&steps, z);
        let signal = z.signal()?;
        let objective = self.objective.as_ref().map(|t| t.value(&signal)).transpose()?;
        let constraints = self
            .stl_constraints
            .iter()
            .map(|t| t.value(&signal))
            .collect::<Result<Vec<_>>>()?;
        let defect_l1 = defects.iter().map(|d| d.lp_norm(1)).sum();
        Ok(Evaluation {
            merit: self.merit_of(objective, &constraints, defect_l1),
            objective,
            constraints,
            defects,
            defect_l1,
        })
    }

    pub fn linearize(&self, z: &Trajectory) -> Result<Linearization> {
        let steps = self.shoot(z)?;
        let defects = Self::defects_of(&steps, z);
        let signal = z.signal()?;
        let objective = self.objective.as_ref().map(|t| t.linearize(&signal)).transpose()?;
        let constraints = self
            .stl_constraints
            .iter()
            .map(|t| t.linearize(&signal))
            .collect::<Result<Vec<_>>>()?;
        Ok(Linearization {
            steps,
            defects,
            objective,
            constraints,
        })
    }

    /// Merit of the first-order model at step `dz` (no prox term).
    pub fn model_merit(&self, lin: &Linearization, z: &Trajectory, dz: &[f64]) -> f64 {
        let (nx, nu) = (self.nx(), self.nu());
        let ns = self.nodes * nx;
        let dx = |k: usize| DVector::from_column_slice(&dz[(k - 1) * nx..k * nx]);
        let du = |k: usize| DVector::from_column_slice(&dz[ns + (k - 1) * nu..ns + k * nu]);
        let lin_value = |(v, g): &(f64, Vec<f64>)| v + g.iter().zip(&dz[..ns]).map(|(a, b)| a * b).sum::<f64>();
        let defect_l1: f64 = lin
            .steps
            .iter()
            .zip(&lin.defects)
            .enumerate()
            .map(|(i, (s, d))| {
                let k = i + 1;
                (d + &s.a * dx(k) + &s.b * du(k) + &s.b_plus * du(k + 1) - dx(k + 1)).lp_norm(1)
            })
            .sum();
        let constraints: Vec<f64> = lin.constraints.iter().map(lin_value).collect();
        debug_assert_eq!(z.num_vars(), ns + self.nodes * nu);
        self.merit_of(lin.objective.as_ref().map(lin_value), &constraints, defect_l1)
    }

    /// Largest violation of the convex path and boundary constraints.
    pub fn constraint_violation(&self, z: &Trajectory) -> f64 {
        let mut worst = 0.0f64;
        for bc in &self.boundary {
            let v = z.get(bc.var, bc.node);
            for (a, b) in v.iter().zip(&bc.value) {
                worst = worst.max((a - b).abs());
            }
        }
        for pc in &self.path {
            for k in 1..=self.nodes {
                let v = &z.get(pc.var(), k)[pc.first()..pc.first() + pc.len()];
                worst = worst.max(pc.violation(v));
            }
        }
        worst
    }

    /// Forward integration from `x_1` under the trajectory's inputs.
    pub fn replay(&self, z: &Trajectory) -> Result<Trajectory> {
        self.check_trajectory(z)?;
        let mut states = z.x(1).to_vec();
        let mut x = DVector::from_column_slice(z.x(1));
        for k in 1..self.nodes {
            x = self
                .discretization
                .step(
                    k,
                    &x,
                    &DVector::from_column_slice(z.u(k)),
                    &DVector::from_column_slice(z.u(k + 1)),
                )?
                .next;
            states.extend(x.iter());
        }
        Trajectory::new(self.nodes, z.nx, z.nu, states, z.inputs.clone())
    }
}
