//! Point-mass quadrotor with quadratic drag that must keep its speed low
//! until it has stayed in a charging station for a fixed window.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::until::build_until_spec_with;
use super::ExperimentVerdict;
use crate::error::Result;
use crate::predicate::{PredicateDef, PredicateTable};
use crate::robustness::{eval, Semantics};
use crate::scp::{BoundaryCondition, Dynamics, FohRk4, OcpProblem, PathConstraint, StlTerm, Trajectory, Var};
use crate::stl::{Formula, ParamTemplate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorParams {
    pub t_final: f64,
    pub nodes: usize,
    pub r_init: [f64; 3],
    pub r_final: [f64; 3],
    pub v_init: [f64; 3],
    pub v_final: [f64; 3],
    pub thrust_max: f64,
    pub mass: f64,
    pub v_max: f64,
    /// Maximum tilt of the thrust from vertical, degrees.
    pub tilt_max_deg: f64,
    pub v_save: f64,
    pub window: usize,
    pub station: [f64; 3],
    pub station_radius: f64,
    pub gravity: [f64; 3],
    pub drag: f64,
    pub eps: f64,
    pub p: u32,
    pub w: u32,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            t_final: 20.0,
            nodes: 21,
            r_init: [0.0, 0.0, 0.0],
            r_final: [8.0, 0.0, 0.0],
            v_init: [0.0; 3],
            v_final: [0.0; 3],
            thrust_max: 10.3,
            mass: 1.0,
            v_max: 2.0,
            tilt_max_deg: 10.0,
            v_save: 1.0,
            window: 11,
            station: [1.25, 2.0, 2.0],
            station_radius: 0.2,
            gravity: [0.0, 0.0, -9.806],
            drag: 0.5,
            eps: 1e-8,
            p: 1,
            w: 1,
        }
    }
}

/// `rdot = v`, `vdot = T / m - c_d ||v|| v + g`; state `(r, v)`, input `T`.
#[derive(Debug, Clone)]
pub struct PointMassDrag {
    pub mass: f64,
    pub drag: f64,
    pub gravity: [f64; 3],
}

impl Dynamics for PointMassDrag {
    fn state_dim(&self) -> usize {
        6
    }

    fn input_dim(&self) -> usize {
        3
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let speed = x.rows(3, 3).norm();
        let mut out = DVector::zeros(6);
        for i in 0..3 {
            out[i] = x[3 + i];
            out[3 + i] = u[i] / self.mass - self.drag * speed * x[3 + i] + self.gravity[i];
        }
        out
    }

    fn jacobians(&self, x: &DVector<f64>, _: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let v = x.rows(3, 3);
        let speed = v.norm();
        let mut a = DMatrix::zeros(6, 6);
        let mut b = DMatrix::zeros(6, 3);
        for i in 0..3 {
            a[(i, 3 + i)] = 1.0;
            b[(3 + i, i)] = 1.0 / self.mass;
            for j in 0..3 {
                // d(||v|| v)/dv = ||v|| I + v v' / ||v||, zero at v = 0
                let mut d = if speed > 0.0 { v[i] * v[j] / speed } else { 0.0 };
                if i == j {
                    d += speed;
                }
                a[(3 + i, 3 + j)] = -self.drag * d;
            }
        }
        (a, b)
    }
}

impl QuadrotorParams {
    pub fn dt(&self) -> f64 {
        self.t_final / (self.nodes - 1) as f64
    }

    /// Thrust that balances gravity.
    pub fn hover_thrust(&self) -> [f64; 3] {
        self.gravity.map(|g| -self.mass * g)
    }

    pub fn template(&self) -> ParamTemplate {
        ParamTemplate {
            eps: self.eps,
            p: self.p,
            w: self.w,
        }
    }

    /// Predicate table `(slow, inside)` and the until formula.
    pub fn formula(&self) -> Result<(Formula, PredicateTable)> {
        let mut table = PredicateTable::new();
        let slow = table.insert(PredicateDef::ball("slow", 3, vec![0.0; 3], self.v_save));
        let inside = table.insert(PredicateDef::ball("inside", 0, self.station.to_vec(), self.station_radius));
        let f = build_until_spec_with(self.nodes, self.window, slow, inside, &self.template())?;
        Ok((f, table))
    }

    /// Straight-line positions between the boundary states, interpolated
    /// velocities, hover thrust at every node.
    pub fn initial_guess(&self) -> Result<Trajectory> {
        let n = self.nodes;
        let mut states = Vec::with_capacity(n * 6);
        for k in 0..n {
            let s = k as f64 / (n - 1) as f64;
            for i in 0..3 {
                states.push(self.r_init[i] + s * (self.r_final[i] - self.r_init[i]));
            }
            for i in 0..3 {
                states.push(self.v_init[i] + s * (self.v_final[i] - self.v_init[i]));
            }
        }
        Trajectory::new(n, 6, 3, states, self.hover_thrust().repeat(n))
    }

    pub fn dynamics(&self) -> PointMassDrag {
        PointMassDrag {
            mass: self.mass,
            drag: self.drag,
            gravity: self.gravity,
        }
    }
}

pub fn build_quadrotor(params: &QuadrotorParams) -> Result<OcpProblem> {
    let (formula, predicates) = params.formula()?;
    let state = |r: [f64; 3], v: [f64; 3]| [r, v].concat();
    let hover = params.hover_thrust().to_vec();
    Ok(OcpProblem {
        name: "quadrotor".into(),
        discretization: Arc::new(FohRk4::new(params.dynamics(), params.dt())),
        nodes: params.nodes,
        dt: params.dt(),
        boundary: vec![
            BoundaryCondition {
                var: Var::State,
                node: 1,
                value: state(params.r_init, params.v_init),
            },
            BoundaryCondition {
                var: Var::State,
                node: params.nodes,
                value: state(params.r_final, params.v_final),
            },
            BoundaryCondition {
                var: Var::Input,
                node: 1,
                value: hover.clone(),
            },
            BoundaryCondition {
                var: Var::Input,
                node: params.nodes,
                value: hover,
            },
        ],
        path: vec![
            PathConstraint::Ball {
                var: Var::State,
                first: 3,
                center: vec![0.0; 3],
                radius: params.v_max,
            },
            PathConstraint::Ball {
                var: Var::Input,
                first: 0,
                center: vec![0.0; 3],
                radius: params.thrust_max,
            },
            PathConstraint::Cone {
                var: Var::Input,
                first: 0,
                len: 3,
                axis: 2,
                half_angle: params.tilt_max_deg.to_radians(),
            },
        ],
        objective: Some(StlTerm {
            formula,
            predicates,
            step: 1,
            semantics: Semantics::Dgmsr,
        }),
        stl_constraints: Vec::new(),
        defect_weight: 1e3,
        stl_weight: 1e3,
    })
}

/// Properties of a solved quadrotor trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorCheck {
    pub dsr_value: f64,
    pub gmsr_value: f64,
    /// First node of the earliest window of `window` consecutive nodes inside
    /// the station with the speed bound held from node 1 to the window end.
    pub window_start: Option<usize>,
    pub path_violation: f64,
    pub boundary_error: f64,
    pub defect_l1: f64,
}

impl QuadrotorCheck {
    pub fn satisfied(&self) -> bool {
        self.dsr_value >= 0.0 && self.window_start.is_some()
    }

    pub fn verdict(&self, tol: f64) -> ExperimentVerdict {
        ExperimentVerdict {
            dsr_value: self.dsr_value,
            gmsr_value: self.gmsr_value,
            satisfied: self.satisfied(),
            constraints_ok: self.path_violation <= tol && self.boundary_error <= tol && self.defect_l1 <= tol,
        }
    }
}

pub fn check_quadrotor(params: &QuadrotorParams, problem: &OcpProblem, z: &Trajectory) -> Result<QuadrotorCheck> {
    let signal = z.signal()?;
    let term = problem.objective.as_ref().expect("quadrotor has an objective");
    let dist = |k: usize| {
        let r = z.x(k);
        (0..3).map(|i| (r[i] - params.station[i]).powi(2)).sum::<f64>().sqrt()
    };
    let speed = |k: usize| z.x(k)[3..6].iter().map(|v| v * v).sum::<f64>().sqrt();
    let w = params.window;
    let window_start = (1..=params.nodes + 1 - w).find(|&s| {
        (s..s + w).all(|k| dist(k) <= params.station_radius) && (1..s + w).all(|k| speed(k) <= params.v_save)
    });
    let mut boundary_error = 0.0f64;
    for bc in &problem.boundary {
        for (a, b) in z.get(bc.var, bc.node).iter().zip(&bc.value) {
            boundary_error = boundary_error.max((a - b).abs());
        }
    }
    let mut path_violation = 0.0f64;
    for pc in &problem.path {
        for k in 1..=z.nodes {
            path_violation = path_violation.max(pc.violation(&z.get(pc.var(), k)[pc.first()..pc.first() + pc.len()]));
        }
    }
    Ok(QuadrotorCheck {
        dsr_value: eval(&term.formula, &term.predicates, &signal, term.step, Semantics::Dsr)?,
        gmsr_value: eval(&term.formula, &term.predicates, &signal, term.step, Semantics::Dgmsr)?,
        window_start,
        path_violation,
        boundary_error,
        defect_l1: problem.evaluate(z)?.defect_l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hover_is_an_equilibrium() {
        let p = QuadrotorParams::default();
        let d = p.dynamics();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
        let u = DVector::from_column_slice(&p.hover_thrust());
        assert_eq!(d.rhs(&x, &u), DVector::zeros(6));

        let problem = build_quadrotor(&p).unwrap();
        let states: Vec<f64> = (0..p.nodes).flat_map(|_| [0.0; 6]).collect();
        let z = Trajectory::new(p.nodes, 6, 3, states, p.hover_thrust().repeat(p.nodes)).unwrap();
        assert_eq!(problem.evaluate(&z).unwrap().defect_l1, 0.0);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let d = QuadrotorParams::default().dynamics();
        let x = DVector::from_vec(vec![0.3, -0.2, 1.0, 0.7, -0.4, 0.25]);
        let u = DVector::from_vec(vec![0.5, 0.2, 9.0]);
        let (a, b) = d.jacobians(&x, &u);
        let h = 1e-6;
        for j in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (d.rhs(&xp, &u) - d.rhs(&xm, &u)) / (2.0 * h);
            for i in 0..6 {
                assert!((col[i] - a[(i, j)]).abs() <= 1e-5 * a[(i, j)].abs().max(1.0));
            }
        }
        for j in 0..3 {
            let mut up = u.clone();
            up[j] += h;
            let col = (d.rhs(&x, &up) - d.rhs(&x, &u)) / h;
            for i in 0..6 {
                assert!((col[i] - b[(i, j)]).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn hover_thrust_sits_on_the_cone_axis() {
        let p = QuadrotorParams::default();
        let problem = build_quadrotor(&p).unwrap();
        let hover = p.hover_thrust();
        assert_eq!(hover, [0.0, 0.0, 9.806]);
        for pc in &problem.path {
            if pc.var() == Var::Input {
                assert_eq!(pc.violation(&hover), 0.0);
            }
        }
        // tilted by more than the limit
        let tilt = 12f64.to_radians();
        let tilted = [9.0 * tilt.sin(), 0.0, 9.0 * tilt.cos()];
        assert!(problem.path[2].violation(&tilted) > 0.0);
    }

    #[test]
    fn boundary_rows() {
        let problem = build_quadrotor(&QuadrotorParams::default()).unwrap();
        let pinned: usize = problem.boundary.iter().map(|b| b.value.len()).sum();
        assert_eq!(pinned, 6 + 6 + 3 + 3);
        let z = QuadrotorParams::default().initial_guess().unwrap();
        assert_eq!(problem.constraint_violation(&z), 0.0);
    }
}
