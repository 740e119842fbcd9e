//! Sequential convex programming: multiple-shooting discretization,
//! l1-penalized convex subproblems, an operator-splitting QP solver and the
//! prox-linear outer loop.

pub mod discretize;
pub mod problem;
pub mod prox_linear;
pub mod qp;
pub mod subproblem;

pub use discretize::{discretize_foh, DiscreteLinear, Discretization, Dynamics, FohRk4, LinearDynamics, StepSensitivity};
pub use problem::{BoundaryCondition, Evaluation, Linearization, OcpProblem, PathConstraint, StlTerm, Trajectory, Var};
pub use prox_linear::{prox_linear_solve, IterationRecord, ScpConfig, ScpReport, ScpState, ScpStatus};
pub use qp::{solve_qp, solve_qp_warm, ConeSet, ConvexQp, QpSettings, QpSolution, QpStatus, WarmStart};
pub use subproblem::{build_subproblem, Layout};
