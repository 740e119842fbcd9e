//! Multiple-shooting discretization with first-order-hold inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Continuous-time dynamics `xdot = f(x, u)` with analytic Jacobians.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `(df/dx, df/du)`
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);
}

/// `xdot = A x + B u`
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    fn jacobians(&self, _: &DVector<f64>, _: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

/// Next state of one shooting interval and its sensitivities to the interval
/// start state and the two bracketing inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSensitivity {
    pub next: DVector<f64>,
    /// `d next / d x_k`
    pub a: DMatrix<f64>,
    /// `d next / d u_k`
    pub b: DMatrix<f64>,
    /// `d next / d u_{k+1}`
    pub b_plus: DMatrix<f64>,
}

/// Discrete-time transition `x_{k+1} = F_k(x_k, u_k, u_{k+1})`.
pub trait Discretization: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// `node` is the 1-based index of the interval start.
    fn step(
        &self,
        node: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        u_next: &DVector<f64>,
    ) -> Result<StepSensitivity>;
}

/// Exact discrete map `x_{k+1} = A x_k + B u_k + B+ u_{k+1}`.
#[derive(Debug, Clone)]
pub struct DiscreteLinear {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b_plus: DMatrix<f64>,
}

impl Discretization for DiscreteLinear {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(
        &self,
        _: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        u_next: &DVector<f64>,
    ) -> Result<StepSensitivity> {
        Ok(StepSensitivity {
            next: &self.a * x + &self.b * u + &self.b_plus * u_next,
            a: self.a.clone(),
            b: self.b.clone(),
            b_plus: self.b_plus.clone(),
        })
    }
}

/// RK4 over each interval with the input interpolated linearly between the
/// nodes, integrating the variational equations alongside the state.
pub struct FohRk4<D> {
    pub dynamics: D,
    pub dt: f64,
    pub substeps: usize,
}

impl<D: Dynamics> FohRk4<D> {
    pub fn new(dynamics: D, dt: f64) -> Self {
        Self {
            dynamics,
            dt,
            substeps: 10,
        }
    }
}

impl<D: Dynamics> Discretization for FohRk4<D> {
    fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }

    fn step(
        &self,
        node: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        u_next: &DVector<f64>,
    ) -> Result<StepSensitivity> {
        discretize_foh(&self.dynamics, x, u, u_next, self.dt, self.substeps)
            .map_err(|_| Error::Divergence { node })
    }
}

/// Augmented state: `x`, `Phi_x` (n x n), `Phi_u` (n x m), `Phi_u+` (n x m).
struct Aug {
    x: DVector<f64>,
    px: DMatrix<f64>,
    pu: DMatrix<f64>,
    pp: DMatrix<f64>,
}

impl Aug {
    fn axpy(&self, h: f64, d: &Aug) -> Aug {
        Aug {
            x: &self.x + &d.x * h,
            px: &self.px + &d.px * h,
            pu: &self.pu + &d.pu * h,
            pp: &self.pp + &d.pp * h,
        }
    }
}

/// Integrates one first-order-hold interval of length `dt` with `substeps`
/// RK4 steps. Differentiating RK4 commutes with applying it to the
/// variational equations, so the returned sensitivities are the exact
/// derivatives of the returned `next`.
pub fn discretize_foh(
    dynamics: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    u_next: &DVector<f64>,
    dt: f64,
    substeps: usize,
) -> Result<StepSensitivity> {
    if !(dt > 0.0) || substeps == 0 {
        return Err(Error::Dimension(format!("need dt > 0 and substeps > 0, got {dt}, {substeps}")));
    }
    let n = dynamics.state_dim();
    let m = dynamics.input_dim();
    if x.len() != n || u.len() != m || u_next.len() != m {
        return Err(Error::Dimension(format!(
            "state/input lengths {}/{}/{} do not match dynamics {n}/{m}",
            x.len(),
            u.len(),
            u_next.len()
        )));
    }
    let deriv = |tau: f64, s: &Aug| -> Aug {
        let lam = tau / dt;
        let ut = u + (u_next - u) * lam;
        let (a, b) = dynamics.jacobians(&s.x, &ut);
        Aug {
            x: dynamics.rhs(&s.x, &ut),
            px: &a * &s.px,
            pu: &a * &s.pu + &b * (1.0 - lam),
            pp: &a * &s.pp + &b * lam,
        }
    };
    let h = dt / substeps as f64;
    let mut s = Aug {
        x: x.clone(),
        px: DMatrix::identity(n, n),
        pu: DMatrix::zeros(n, m),
        pp: DMatrix::zeros(n, m),
    };
    for i in 0..substeps {
        let t = i as f64 * h;
        let k1 = deriv(t, &s);
        let k2 = deriv(t + h / 2.0, &s.axpy(h / 2.0, &k1));
        let k3 = deriv(t + h / 2.0, &s.axpy(h / 2.0, &k2));
        let k4 = deriv(t + h, &s.axpy(h, &k3));
        s = Aug {
            x: &s.x + (&k1.x + &k2.x * 2.0 + &k3.x * 2.0 + &k4.x) * (h / 6.0),
            px: &s.px + (&k1.px + &k2.px * 2.0 + &k3.px * 2.0 + &k4.px) * (h / 6.0),
            pu: &s.pu + (&k1.pu + &k2.pu * 2.0 + &k3.pu * 2.0 + &k4.pu) * (h / 6.0),
            pp: &s.pp + (&k1.pp + &k2.pp * 2.0 + &k3.pp * 2.0 + &k4.pp) * (h / 6.0),
        };
        if !s.x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { node: 0 });
        }
    }
    Ok(StepSensitivity {
        next: s.x,
        a: s.px,
        b: s.pu,
        b_plus: s.pp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Zero;
    impl Dynamics for Zero {
        fn state_dim(&self) -> usize {
            2
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn rhs(&self, _: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(2)
        }
        fn jacobians(&self, _: &DVector<f64>, _: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
            (DMatrix::zeros(2, 2), DMatrix::zeros(2, 1))
        }
    }

    /// Nonlinear test system: damped pendulum with input torque.
    struct Pendulum;
    impl Dynamics for Pendulum {
        fn state_dim(&self) -> usize {
            2
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[1], -x[0].sin() - 0.3 * x[1] + u[0] * (1.0 + 0.5 * x[0] * x[0])])
        }
        fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
            let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -x[0].cos() + u[0] * x[0], -0.3]);
            let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0 + 0.5 * x[0] * x[0]]);
            (a, b)
        }
    }

    #[test]
    fn zero_dynamics_is_identity() {
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let u = DVector::from_vec(vec![3.0]);
        let s = discretize_foh(&Zero, &x, &u, &u, 0.7, 10).unwrap();
        assert_eq!(s.next, x);
        assert_eq!(s.a, DMatrix::identity(2, 2));
        assert_eq!(s.b, DMatrix::zeros(2, 1));
        assert_eq!(s.b_plus, DMatrix::zeros(2, 1));
    }

    /// Matrix exponential by scaling and squaring of a long Taylor series.
    fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let scaled = a / 1024.0;
        let n = a.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..10 {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn linear_flow_matches_matrix_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let dyns = LinearDynamics { a: a.clone(), b: DMatrix::zeros(3, 1) };
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::zeros(1);
            let exact = expm(&(&a * 0.5)) * &x;
            // one RK4 step of size h has local error O(h^5)
            let coarse = discretize_foh(&dyns, &x, &u, &u, 0.5, 1).unwrap().next;
            assert!((&coarse - &exact).norm() < 0.5f64.powi(5) * 0.1);
            let fine = discretize_foh(&dyns, &x, &u, &u, 0.5, 10).unwrap();
            // ten substeps: global error O(h^4) with h = 0.05
            assert!((&fine.next - &exact).norm() < 1e-6);
            assert!((&fine.a - expm(&(&a * 0.5))).norm() < 1e-6);
        }
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dt = 0.4;
        for _ in 0..20 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(1, |_, _| rng.gen_range(-1.0..1.0));
            let up = DVector::from_fn(1, |_, _| rng.gen_range(-1.0..1.0));
            let s = discretize_foh(&Pendulum, &x, &u, &up, dt, 10).unwrap();
            let h = 1e-6;
            let fd = |perturb: &dyn Fn(f64) -> (DVector<f64>, DVector<f64>, DVector<f64>)| {
                let (xp, upp, unp) = perturb(h);
                let (xm, upm, unm) = perturb(-h);
                let a = discretize_foh(&Pendulum, &xp, &upp, &unp, dt, 10).unwrap().next;
                let b = discretize_foh(&Pendulum, &xm, &upm, &unm, dt, 10).unwrap().next;
                (a - b) / (2.0 * h)
            };
            for j in 0..2 {
                let col = fd(&|d| {
                    let mut xx = x.clone();
                    xx[j] += d;
                    (xx, u.clone(), up.clone())
                });
                for i in 0..2 {
                    assert!((col[i] - s.a[(i, j)]).abs() <= 1e-5 * s.a[(i, j)].abs().max(1.0));
                }
            }
            let col_u = fd(&|d| (x.clone(), &u + DVector::from_element(1, d), up.clone()));
            let col_p = fd(&|d| (x.clone(), u.clone(), &up + DVector::from_element(1, d)));
            for i in 0..2 {
                assert!((col_u[i] - s.b[(i, 0)]).abs() <= 1e-5 * s.b[(i, 0)].abs().max(1.0));
                assert!((col_p[i] - s.b_plus[(i, 0)]).abs() <= 1e-5 * s.b_plus[(i, 0)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DVector::zeros(2);
        let u = DVector::zeros(1);
        assert!(discretize_foh(&Zero, &x, &u, &u, 0.0, 10).is_err());
        assert!(discretize_foh(&Zero, &DVector::zeros(3), &u, &u, 1.0, 10).is_err());
    }

    #[test]
    fn divergence_reports_node() {
        struct Blowup;
        impl Dynamics for Blowup {
            fn state_dim(&self) -> usize {
                1
            }
            fn input_dim(&self) -> usize {
                1
            }
            fn rhs(&self, x: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
                x.map(|v| v * v * v)
            }
            fn jacobians(&self, x: &DVector<f64>, _: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
                (DMatrix::from_element(1, 1, 3.0 * x[0] * x[0]), DMatrix::zeros(1, 1))
            }
        }
        let d = FohRk4::new(Blowup, 10.0);
        let x = DVector::from_element(1, 1e3);
        let u = DVector::zeros(1);
        assert_eq!(d.step(4, &x, &u, &u), Err(Error::Divergence { node: 4 }));
    }
}
