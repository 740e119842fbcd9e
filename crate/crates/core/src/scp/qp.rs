//! Convex quadratic programs over products of boxes, Euclidean balls and
//! second-order cones, solved by operator splitting (ADMM).
//!
//! ```text
//! minimize    1/2 x'Px + q'x
//! subject to  Ax in C = C_1 x C_2 x ...
//! ```
//!
//! The iteration follows the OSQP splitting with the box projection replaced
//! by a projection onto each stacked set, a dense Cholesky factorization of
//! `P + sigma I + A' diag(rho) A`, and periodic rho adaptation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One block of stacked constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeSet {
    /// `lo <= v <= hi` entrywise; `lo == hi` makes an equality row. Infinite
    /// bounds are allowed.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `||v - center|| <= radius`
    Ball { center: Vec<f64>, radius: f64 },
    /// With `y = v + offset`: `||y without y[axis]|| <= slope * y[axis]`.
    Cone { offset: Vec<f64>, axis: usize, slope: f64 },
}

impl ConeSet {
    pub fn dim(&self) -> usize {
        match self {
            ConeSet::Box { lo, .. } => lo.len(),
            ConeSet::Ball { center, .. } => center.len(),
            ConeSet::Cone { offset, .. } => offset.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ConeSet::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(Error::Dimension("box bounds must satisfy lo <= hi".into()));
                }
            }
            ConeSet::Ball { radius, .. } => {
                if !(*radius >= 0.0) {
                    return Err(Error::Dimension(format!("ball radius {radius} must be >= 0")));
                }
            }
            ConeSet::Cone { offset, axis, slope } => {
                if *axis >= offset.len() || !(*slope >= 0.0) {
                    return Err(Error::Dimension("cone axis out of range or negative slope".into()));
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection in place.
    pub fn project(&self, v: &mut [f64]) {
        match self {
            ConeSet::Box { lo, hi } => {
                for ((x, l), h) in v.iter_mut().zip(lo).zip(hi) {
                    *x = x.clamp(*l, *h);
                }
            }
            ConeSet::Ball { center, radius } => {
                let dist = v.iter().zip(center).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
                if dist > *radius {
                    let scale = radius / dist;
                    for (x, c) in v.iter_mut().zip(center) {
                        *x = c + (*x - c) * scale;
                    }
                }
            }
            ConeSet::Cone { offset, axis, slope } => {
                let mut y: Vec<f64> = v.iter().zip(offset).map(|(x, o)| x + o).collect();
                project_cone(&mut y, *axis, *slope);
                for ((x, yi), o) in v.iter_mut().zip(&y).zip(offset) {
                    *x = yi - o;
                }
            }
        }
    }

    /// Largest violation of membership (0 inside).
    pub fn violation(&self, v: &[f64]) -> f64 {
        match self {
            ConeSet::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| (l - x).max(x - h).max(0.0))
                .fold(0.0, f64::max),
            ConeSet::Ball { center, radius } => {
                let dist = v.iter().zip(center).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
                (dist - radius).max(0.0)
            }
            ConeSet::Cone { offset, axis, slope } => {
                let y: Vec<f64> = v.iter().zip(offset).map(|(x, o)| x + o).collect();
                let (t, s) = split_axis(&y, *axis);
                (s - slope * t).max(0.0)
            }
        }
    }

    fn is_equality(&self, i: usize) -> bool {
        matches!(self, ConeSet::Box { lo, hi } if lo[i] == hi[i])
    }
}

fn split_axis(y: &[f64], axis: usize) -> (f64, f64) {
    let s = y
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, v)| v * v)
        .sum::<f64>()
        .sqrt();
    (y[axis], s)
}

/// Projection onto `{ y : ||y_perp|| <= slope * y[axis] }`.
fn project_cone(y: &mut [f64], axis: usize, slope: f64) {
    let (t, s) = split_axis(y, axis);
    if s <= slope * t {
        return;
    }
    if slope * s <= -t {
        y.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let c = (t + slope * s) / (1.0 + slope * slope);
    for (i, v) in y.iter_mut().enumerate() {
        *v = if i == axis { c } else { c * slope * *v / s };
    }
}

/// A convex QP with stacked set constraints.
#[derive(Debug, Clone)]
pub struct ConvexQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub sets: Vec<ConeSet>,
}

impl ConvexQp {
    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.len();
        if self.p.shape() != (n, n) || self.a.ncols() != n {
            return Err(Error::Dimension(format!(
                "P is {:?}, A is {:?}, q has {n} entries",
                self.p.shape(),
                self.a.shape()
            )));
        }
        let rows: usize = self.sets.iter().map(ConeSet::dim).sum();
        if rows != self.a.nrows() {
            return Err(Error::Dimension(format!(
                "sets cover {rows} rows but A has {}",
                self.a.nrows()
            )));
        }
        self.sets.iter().try_for_each(ConeSet::validate)
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// Largest set violation of `Ax`.
    pub fn constraint_violation(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.a * x;
        let mut start = 0;
        let mut worst = 0.0f64;
        for set in &self.sets {
            let d = set.dim();
            worst = worst.max(set.violation(&ax.as_slice()[start..start + d]));
            start += d;
        }
        worst
    }

    fn project(&self, v: &mut DVector<f64>) {
        let mut start = 0;
        for set in &self.sets {
            let d = set.dim();
            set.project(&mut v.as_mut_slice()[start..start + d]);
            start += d;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    /// Absolute tolerance on the primal and dual residuals (infinity norm).
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Iterations between residual checks and rho updates.
    pub check_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the stacked set constraints.
    pub y: DVector<f64>,
    /// Projected constraint values, `z = Pi_C(Ax)` at convergence.
    pub z: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// `||Ax - z||_inf`
    pub primal_residual: f64,
    /// `||Px + q + A'y||_inf`
    pub dual_residual: f64,
}

/// Optional starting point for [`solve_qp_warm`].
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub x: Option<DVector<f64>>,
    pub y: Option<DVector<f64>>,
}

pub fn solve_qp(qp: &ConvexQp, settings: &QpSettings) -> Result<QpSolution> {
    solve_qp_warm(qp, settings, &WarmStart::default())
}

fn factor(qp: &ConvexQp, rho_vec: &DVector<f64>, sigma: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = qp.num_vars();
    let mut k = qp.p.clone() + DMatrix::identity(n, n) * sigma;
    let mut ra = qp.a.clone();
    for (mut row, r) in ra.row_iter_mut().zip(rho_vec.iter()) {
        row *= *r;
    }
    k += qp.a.tr_mul(&ra);
    Cholesky::new(k).ok_or_else(|| Error::Dimension("QP matrix is not positive definite".into()))
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn solve_qp_warm(qp: &ConvexQp, settings: &QpSettings, warm: &WarmStart) -> Result<QpSolution> {
    qp.validate()?;
    let n = qp.num_vars();
    let m = qp.num_rows();
    let eq_rows: Vec<bool> = qp
        .sets
        .iter()
        .flat_map(|s| (0..s.dim()).map(move |i| s.is_equality(i)))
        .collect();
    let mut rho = settings.rho;
    let rho_vector = |rho: f64| DVector::from_iterator(m, eq_rows.iter().map(|&e| if e { 1e3 * rho } else { rho }));
    let mut rho_vec = rho_vector(rho);
    let mut chol = factor(qp, &rho_vec, settings.sigma)?;

    let mut x = warm.x.clone().unwrap_or_else(|| DVector::zeros(n));
    let mut z = &qp.a * &x;
    qp.project(&mut z);
    let mut y = warm.y.clone().unwrap_or_else(|| DVector::zeros(m));
    let alpha = settings.alpha;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut status = QpStatus::MaxIter;
    while iterations < settings.max_iter {
        iterations += 1;
        let rhs = &x * settings.sigma - &qp.q + qp.a.tr_mul(&(rho_vec.component_mul(&z) - &y));
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &qp.a * &x_tilde;
        x = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relax = &z_tilde * alpha + &z * (1.0 - alpha);
        let mut z_next = &z_relax + y.component_div(&rho_vec);
        qp.project(&mut z_next);
        y += rho_vec.component_mul(&(&z_relax - &z_next));
        z = z_next;

        if iterations % settings.check_every == 0 || iterations == settings.max_iter {
            let ax = &qp.a * &x;
            let px = &qp.p * &x;
            let aty = qp.a.tr_mul(&y);
            primal = inf_norm(&(&ax - &z));
            dual = inf_norm(&(&px + &qp.q + &aty));
            if primal <= settings.tol && dual <= settings.tol {
                status = QpStatus::Solved;
                break;
            }
            let p_scale = inf_norm(&ax).max(inf_norm(&z)).max(1e-12);
            let d_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&qp.q)).max(1e-12);
            let ratio = ((primal / p_scale) / (dual / d_scale).max(1e-30)).sqrt();
            let new_rho = (rho * ratio).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                rho_vec = rho_vector(rho);
                chol = factor(qp, &rho_vec, settings.sigma)?;
            }
        }
    }
    Ok(QpSolution {
        x,
        y,
        z,
        status,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn settings() -> QpSettings {
        QpSettings {
            tol: 1e-10,
            ..QpSettings::default()
        }
    }

    #[test]
    fn unconstrained_minimum() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let q = DVector::from_vec(vec![1.0, -2.0]);
        let qp = ConvexQp {
            p: p.clone(),
            q: q.clone(),
            a: DMatrix::zeros(0, 2),
            sets: vec![],
        };
        let sol = solve_qp(&qp, &settings()).unwrap();
        let exact = -p.try_inverse().unwrap() * q;
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x - exact).amax() <= 1e-8);
    }

    #[test]
    fn ball_projection_by_qp() {
        // minimize 1/2 ||x - (3, 0)||^2 subject to ||x|| <= 1.5
        let qp = ConvexQp {
            p: DMatrix::identity(2, 2),
            q: DVector::from_vec(vec![-3.0, 0.0]),
            a: DMatrix::identity(2, 2),
            sets: vec![ConeSet::Ball {
                center: vec![0.0, 0.0],
                radius: 1.5,
            }],
        };
        let sol = solve_qp(&qp, &settings()).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 1.5).abs() <= 1e-8 && sol.x[1].abs() <= 1e-8);

        let mut v = [3.0, 0.0];
        ConeSet::Ball {
            center: vec![0.0, 0.0],
            radius: 1.5,
        }
        .project(&mut v);
        assert_eq!(v, [1.5, 0.0]);
    }

    #[test]
    fn cone_projection_cases() {
        let cone = ConeSet::Cone {
            offset: vec![0.0; 3],
            axis: 2,
            slope: 1.0,
        };
        let mut inside = [0.5, 0.0, 1.0];
        cone.project(&mut inside);
        assert_eq!(inside, [0.5, 0.0, 1.0]);
        let mut polar = [0.5, 0.0, -1.0];
        cone.project(&mut polar);
        assert_eq!(polar, [0.0, 0.0, 0.0]);
        let mut side = [2.0, 0.0, 0.0];
        cone.project(&mut side);
        assert!((side[0] - 1.0).abs() < 1e-15 && (side[2] - 1.0).abs() < 1e-15);
    }

    /// Projection is characterized by `<v - P(v), c - P(v)> <= 0` for every
    /// `c` in the set; check it against random members.
    #[test]
    fn projections_satisfy_variational_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sets = [
            ConeSet::Box {
                lo: vec![-1.0, 0.0, 2.0],
                hi: vec![1.0, 0.0, f64::INFINITY],
            },
            ConeSet::Ball {
                center: vec![0.5, -1.0, 2.0],
                radius: 1.2,
            },
            ConeSet::Cone {
                offset: vec![0.1, 0.2, -0.3],
                axis: 1,
                slope: 0.3,
            },
        ];
        for set in &sets {
            for _ in 0..200 {
                let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let mut pv = v.clone();
                set.project(&mut pv);
                assert!(set.violation(&pv) <= 1e-12);
                for _ in 0..20 {
                    let mut c: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
                    set.project(&mut c);
                    let ip: f64 = (0..3).map(|i| (v[i] - pv[i]) * (c[i] - pv[i])).sum();
                    assert!(ip <= 1e-9, "{set:?} {v:?}");
                }
            }
        }
    }

    fn kkt_check(qp: &ConvexQp, sol: &QpSolution, tol: f64) {
        let stationarity = &qp.p * &sol.x + &qp.q + qp.a.tr_mul(&sol.y);
        assert!(stationarity.amax() <= tol, "stationarity {}", stationarity.amax());
        assert!(qp.constraint_violation(&sol.x) <= tol);
        // y lies in the normal cone of C at z: z = Pi_C(z + y)
        let mut shifted = &sol.z + &sol.y;
        qp.project(&mut shifted);
        assert!((shifted - &sol.z).amax() <= 10.0 * tol);
    }

    #[test]
    fn random_feasible_qps_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = 6;
            let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let p = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
            let q = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let a = DMatrix::from_fn(8, n, |_, _| rng.gen_range(-1.0..1.0));
            // a known feasible point keeps every set non-empty
            let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let ax0 = &a * &x0;
            let sets = vec![
                ConeSet::Box {
                    lo: vec![ax0[0], ax0[1] - 0.5, f64::NEG_INFINITY],
                    hi: vec![ax0[0], ax0[1] + 0.5, ax0[2] + 0.1],
                },
                ConeSet::Ball {
                    center: vec![ax0[3] + 0.2, ax0[4]],
                    radius: 0.5,
                },
                ConeSet::Cone {
                    offset: vec![-ax0[5], -ax0[6], 1.0 - ax0[7]],
                    axis: 2,
                    slope: 0.5,
                },
            ];
            let qp = ConvexQp { p, q, a, sets };
            let sol = solve_qp(&qp, &QpSettings { tol: 1e-9, ..QpSettings::default() }).unwrap();
            assert_eq!(sol.status, QpStatus::Solved);
            kkt_check(&qp, &sol, 1e-6);
        }
    }

    #[test]
    fn dimension_errors() {
        let qp = ConvexQp {
            p: DMatrix::identity(2, 2),
            q: DVector::zeros(2),
            a: DMatrix::identity(2, 2),
            sets: vec![ConeSet::Box {
                lo: vec![0.0],
                hi: vec![1.0],
            }],
        };
        assert!(matches!(solve_qp(&qp, &settings()), Err(Error::Dimension(_))));
    }

    #[test]
    fn max_iter_reported() {
        let qp = ConvexQp {
            p: DMatrix::identity(2, 2) * 1e-6,
            q: DVector::from_vec(vec![-1.0, 1.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            sets: vec![ConeSet::Box {
                lo: vec![0.0],
                hi: vec![0.0],
            }],
        };
        let sol = solve_qp(
            &qp,
            &QpSettings {
                max_iter: 3,
                check_every: 1,
                ..settings()
            },
        )
        .unwrap();
        assert_eq!(sol.status, QpStatus::MaxIter);
        assert_eq!(sol.iterations, 3);
    }
}
