//! Convex subproblem of one prox-linear iteration.
//!
//! Decision vector, in order:
//!
//! ```text
//! dx (K nx) | du (K nu) | s+ ((K-1) nx) | s- ((K-1) nx) | t (one per STL constraint)
//! ```
//!
//! The linearized defect of interval `k` equals `s+ - s-` with both slacks
//! nonnegative, so `lambda * sum(s+ + s-)` is the l1 penalty at the optimum.
//! STL constraints enter through hinge slacks `t >= max(0, -(G + g'dx))`.

use nalgebra::{DMatrix, DVector};

use super::problem::{Linearization, OcpProblem, PathConstraint, Trajectory, Var};
use super::qp::{ConeSet, ConvexQp};
use crate::error::{Error, Result};

/// Index arithmetic for the subproblem decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nodes: usize,
    pub nx: usize,
    pub nu: usize,
    pub stl_constraints: usize,
}

impl Layout {
    pub fn of(problem: &OcpProblem) -> Self {
        Self {
            nodes: problem.nodes,
            nx: problem.nx(),
            nu: problem.nu(),
            stl_constraints: problem.stl_constraints.len(),
        }
    }

    /// Length of the trajectory part `(dx, du)`.
    pub fn traj_len(&self) -> usize {
        self.nodes * (self.nx + self.nu)
    }

    fn slack_len(&self) -> usize {
        (self.nodes - 1) * self.nx
    }

    pub fn num_vars(&self) -> usize {
        self.traj_len() + 2 * self.slack_len() + self.stl_constraints
    }

    pub fn x(&self, k: usize, i: usize) -> usize {
        (k - 1) * self.nx + i
    }

    pub fn u(&self, k: usize, i: usize) -> usize {
        self.nodes * self.nx + (k - 1) * self.nu + i
    }

    pub fn var(&self, var: Var, k: usize, i: usize) -> usize {
        match var {
            Var::State => self.x(k, i),
            Var::Input => self.u(k, i),
        }
    }

    /// Positive slack of defect component `i` on interval `k` (1-based).
    pub fn s_plus(&self, k: usize, i: usize) -> usize {
        self.traj_len() + (k - 1) * self.nx + i
    }

    pub fn s_minus(&self, k: usize, i: usize) -> usize {
        self.traj_len() + self.slack_len() + (k - 1) * self.nx + i
    }

    pub fn hinge(&self, j: usize) -> usize {
        self.traj_len() + 2 * self.slack_len() + j
    }
}

/// Rows accumulated block by block.
struct RowBuilder {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    sets: Vec<ConeSet>,
}

impl RowBuilder {
    fn push(&mut self, rows: Vec<Vec<(usize, f64)>>, set: ConeSet) {
        debug_assert_eq!(rows.len(), set.dim());
        self.rows.extend(rows);
        self.sets.push(set);
    }

    fn finish(self) -> (DMatrix<f64>, Vec<ConeSet>) {
        let mut a = DMatrix::zeros(self.rows.len(), self.n);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                a[(r, c)] += v;
            }
        }
        (a, self.sets)
    }
}

/// Builds the QP in the deviation `dz` from iterate `z` with prox weight `sigma`.
pub fn build_subproblem(
    problem: &OcpProblem,
    z: &Trajectory,
    sigma: f64,
    lin: &Linearization,
) -> Result<ConvexQp> {
    let l = Layout::of(problem);
    if z.nodes != l.nodes || z.nx != l.nx || z.nu != l.nu {
        return Err(Error::Dimension("iterate does not match the problem".into()));
    }
    if lin.steps.len() != l.nodes - 1
        || lin.defects.len() != l.nodes - 1
        || lin.constraints.len() != l.stl_constraints
        || lin.objective.is_some() != problem.objective.is_some()
    {
        return Err(Error::Dimension("linearization does not match the problem".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParams(format!("prox weight must be positive, got {sigma}")));
    }
    let n = l.num_vars();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..l.traj_len() {
        p[(i, i)] = sigma;
    }
    let mut q = DVector::zeros(n);
    if let Some((_, g)) = &lin.objective {
        if g.len() != l.nodes * l.nx {
            return Err(Error::Dimension("objective gradient length".into()));
        }
        for (i, gi) in g.iter().enumerate() {
            q[i] = -gi;
        }
    }
    for i in l.traj_len()..l.hinge(0) {
        q[i] = problem.defect_weight;
    }
    for j in 0..l.stl_constraints {
        q[l.hinge(j)] = problem.stl_weight;
    }

    let mut rb = RowBuilder {
        n,
        rows: Vec::new(),
        sets: Vec::new(),
    };

    // linearized defects
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (idx, (s, d)) in lin.steps.iter().zip(&lin.defects).enumerate() {
        let k = idx + 1;
        for i in 0..l.nx {
            let mut row = Vec::with_capacity(l.nx + 2 * l.nu + 3);
            for j in 0..l.nx {
                row.push((l.x(k, j), s.a[(i, j)]));
            }
            for j in 0..l.nu {
                row.push((l.u(k, j), s.b[(i, j)]));
                row.push((l.u(k + 1, j), s.b_plus[(i, j)]));
            }
            row.push((l.x(k + 1, i), -1.0));
            row.push((l.s_plus(k, i), -1.0));
            row.push((l.s_minus(k, i), 1.0));
            rows.push(row);
            rhs.push(-d[i]);
        }
    }
    rb.push(rows, ConeSet::Box { lo: rhs.clone(), hi: rhs });

    // nonnegative slacks
    let first_slack = l.traj_len();
    let count = n - first_slack;
    rb.push(
        (first_slack..n).map(|c| vec![(c, 1.0)]).collect(),
        ConeSet::Box {
            lo: vec![0.0; count],
            hi: vec![f64::INFINITY; count],
        },
    );

    // boundary conditions
    for bc in &problem.boundary {
        let current = z.get(bc.var, bc.node);
        let target: Vec<f64> = bc.value.iter().zip(current).map(|(v, c)| v - c).collect();
        rb.push(
            (0..bc.value.len())
                .map(|i| vec![(l.var(bc.var, bc.node, i), 1.0)])
                .collect(),
            ConeSet::Box {
                lo: target.clone(),
                hi: target,
            },
        );
    }

    // path constraints at every node
    for pc in &problem.path {
        for k in 1..=l.nodes {
            let (var, first, len) = (pc.var(), pc.first(), pc.len());
            let current = &z.get(var, k)[first..first + len];
            let rows: Vec<_> = (0..len).map(|i| vec![(l.var(var, k, first + i), 1.0)]).collect();
            let set = match pc {
                PathConstraint::Ball { center, radius, .. } => ConeSet::Ball {
                    center: center.iter().zip(current).map(|(c, v)| c - v).collect(),
                    radius: *radius,
                },
                PathConstraint::Cone { axis, half_angle, .. } => ConeSet::Cone {
                    offset: current.to_vec(),
                    axis: *axis,
                    slope: half_angle.tan(),
                },
                PathConstraint::Bounds { lo, hi, .. } => ConeSet::Box {
                    lo: vec![lo - current[0]],
                    hi: vec![hi - current[0]],
                },
            };
            rb.push(rows, set);
        }
    }

    // STL hinge: t_j + g_j'dx >= -G_j
    for (j, (value, g)) in lin.constraints.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = g
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        row.push((l.hinge(j), 1.0));
        rb.push(
            vec![row],
            ConeSet::Box {
                lo: vec![-value],
                hi: vec![f64::INFINITY],
            },
        );
    }

    let (a, sets) = rb.finish();
    Ok(ConvexQp { p, q, a, sets })
}
