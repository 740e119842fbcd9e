//! Key functions: the aggregators that replace `min`/`max` in the recursive
//! robustness semantics.
//!
//! The generalized means are evaluated in the log domain so that large `p`
//! and long input vectors neither overflow nor underflow. The excess of a
//! mean over `eps` is computed with `expm1`, so `h_and`/`h_or` keep the exact
//! sign of `min`/`max` even when that excess is far below `eps`.

use crate::stl::KeyParams;

/// Which part of `y` a clipped square keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `max(y_i, 0)^2`
    Pos,
    /// `min(y_i, 0)^2`
    Neg,
}

pub fn clip_sq(y: &[f64], side: Side) -> Vec<f64> {
    y.iter()
        .map(|&v| match side {
            Side::Pos => v.max(0.0).powi(2),
            Side::Neg => v.min(0.0).powi(2),
        })
        .collect()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// A generalized mean `M >= eps`, kept as `ln M` plus the split point
/// `t = ln(mass / eps^q)` that decides which term dominates.
#[derive(Debug, Clone, Copy)]
struct Mean {
    eps: f64,
    log_value: f64,
    t: f64,
    /// Exponent `q` of the outer root (`1^T w` or `p`).
    order: f64,
    /// For the geometric mean: `prod / (eps^W + prod)`.
    share: f64,
}

impl Mean {
    fn at_eps(eps: f64) -> Self {
        Self {
            eps,
            log_value: eps.ln(),
            t: f64::NEG_INFINITY,
            order: 1.0,
            share: 0.0,
        }
    }

    /// `ln(eps^q + mass)^(1/q)` from `ln mass`.
    fn from_log_mass(eps: f64, log_mass: f64, order: f64) -> Self {
        let t = log_mass - order * eps.ln();
        let log_value = if t > 0.0 {
            (log_mass + (-t).exp().ln_1p()) / order
        } else {
            eps.ln() + t.exp().ln_1p() / order
        };
        Self {
            eps,
            log_value,
            t,
            order,
            share: sigmoid(t),
        }
    }

    fn value(&self) -> f64 {
        if self.t > 0.0 {
            self.log_value.exp()
        } else {
            self.eps * (self.t.exp().ln_1p() / self.order).exp()
        }
    }

    /// `M - eps`, exact in sign and accurate when `M` is close to `eps`.
    fn excess(&self) -> f64 {
        if self.t > 0.0 {
            self.value() - self.eps
        } else {
            self.eps * (self.t.exp().ln_1p() / self.order).exp_m1()
        }
    }

    fn ln(&self) -> f64 {
        self.log_value
    }
}

/// Geometric mean from `ln z_i` (`None` marks `z_i = 0`).
fn geometric(log_z: impl Iterator<Item = Option<f64>>, eps: f64, w: &[u32]) -> Mean {
    let total: f64 = w.iter().map(|&w| w as f64).sum();
    let mut log_prod = 0.0;
    for (lz, &wi) in log_z.zip(w) {
        match lz {
            Some(lz) => log_prod += wi as f64 * lz,
            None => return Mean::at_eps(eps),
        }
    }
    Mean::from_log_mass(eps, log_prod, total)
}

/// Power mean from `ln z_i` (`None` marks `z_i = 0`).
fn power(log_z: impl Iterator<Item = Option<f64>>, eps: f64, p: u32, w: &[u32]) -> Mean {
    let total: f64 = w.iter().map(|&w| w as f64).sum();
    let pf = p as f64;
    let terms: Vec<f64> = log_z
        .zip(w)
        .filter_map(|(lz, &wi)| lz.map(|lz| (wi as f64 / total).ln() + pf * lz))
        .collect();
    if terms.is_empty() {
        return Mean::at_eps(eps);
    }
    Mean::from_log_mass(eps, log_sum_exp(&terms), pf)
}

fn ln_or_zero(z: f64) -> Option<f64> {
    (z > 0.0).then(|| z.ln())
}

/// `(eps^{1^T w} + prod z_i^{w_i})^{1 / 1^T w}`
pub fn gm_mean_eps(z: &[f64], eps: f64, w: &[u32]) -> f64 {
    debug_assert_eq!(z.len(), w.len());
    geometric(z.iter().map(|&z| ln_or_zero(z)), eps, w).value()
}

/// `(eps^p + (1 / 1^T w) sum w_i z_i^p)^{1/p}`
pub fn pm_mean_eps(z: &[f64], eps: f64, p: u32, w: &[u32]) -> f64 {
    debug_assert_eq!(z.len(), w.len());
    power(z.iter().map(|&z| ln_or_zero(z)), eps, p, w).value()
}

/// Conjunction key function; writes `d h / d y` into `grad` when given.
pub(crate) fn h_and_impl(y: &[f64], params: KeyParams<'_>, grad: Option<&mut [f64]>) -> f64 {
    assert_eq!(
        y.len(),
        params.w.len(),
        "key function input and weight vector lengths differ"
    );
    let KeyParams { eps, p, w } = params;
    let total = params.total_weight();
    let root_eps = eps.sqrt();
    let any_neg = y.iter().any(|&v| v < 0.0);
    let all_pos = y.iter().all(|&v| v > 0.0);

    if all_pos {
        // |y|_-^2 = 0, so the power-mean term sits at sqrt(eps).
        let m = geometric(y.iter().map(|&v| Some(2.0 * v.ln())), eps, w);
        let root = m.value().sqrt();
        let value = m.excess() / (root + root_eps);
        if let Some(g) = grad {
            for ((gi, &yi), &wi) in g.iter_mut().zip(y).zip(w) {
                *gi = root * m.share * wi as f64 / (total * yi);
            }
        }
        value
    } else if any_neg {
        // Some entry is <= 0, so the geometric-mean term sits at sqrt(eps).
        let m = power(
            y.iter().map(|&v| (v < 0.0).then(|| 2.0 * (-v).ln())),
            eps,
            p,
            w,
        );
        let root = m.value().sqrt();
        let value = -m.excess() / (root + root_eps);
        if let Some(g) = grad {
            let pf = p as f64;
            let ln_m = m.ln();
            for ((gi, &yi), &wi) in g.iter_mut().zip(y).zip(w) {
                *gi = if yi < 0.0 {
                    ((0.5 - pf) * ln_m + (wi as f64 / total).ln() + (2.0 * pf - 1.0) * (-yi).ln())
                        .exp()
                } else {
                    0.0
                };
            }
        }
        value
    } else {
        // non-negative with at least one exact zero
        if let Some(g) = grad {
            g.fill(0.0);
        }
        0.0
    }
}

/// Disjunction key function `h_or(y) = -h_and(-y)`.
pub(crate) fn h_or_impl(y: &[f64], params: KeyParams<'_>, grad: Option<&mut [f64]>) -> f64 {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    // d/dy [-h_and(-y)] = (grad h_and)(-y)
    -h_and_impl(&neg, params, grad)
}

pub fn h_and(y: &[f64], params: KeyParams<'_>) -> f64 {
    h_and_impl(y, params, None)
}

pub fn h_or(y: &[f64], params: KeyParams<'_>) -> f64 {
    h_or_impl(y, params, None)
}

/// `-(1/kappa) ln sum exp(-kappa y_i)`; gradient is the softmin weights.
pub(crate) fn soft_min_impl(y: &[f64], kappa: f64, grad: Option<&mut [f64]>) -> f64 {
    let m = y.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = y.iter().map(|&v| (-kappa * (v - m)).exp()).collect();
    let s: f64 = e.iter().sum();
    if let Some(g) = grad {
        for (gi, ei) in g.iter_mut().zip(&e) {
            *gi = ei / s;
        }
    }
    m - s.ln() / kappa
}

/// `sum y_i exp(kappa y_i) / sum exp(kappa y_i)`.
pub(crate) fn soft_max_impl(y: &[f64], kappa: f64, grad: Option<&mut [f64]>) -> f64 {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = y.iter().map(|&v| (kappa * (v - m)).exp()).collect();
    let s: f64 = e.iter().sum();
    let value = y.iter().zip(&e).map(|(v, e)| v * e).sum::<f64>() / s;
    if let Some(g) = grad {
        for ((gi, ei), &yi) in g.iter_mut().zip(&e).zip(y) {
            let sigma = ei / s;
            *gi = sigma * (1.0 + kappa * (yi - value));
        }
    }
    value
}

pub fn soft_min(y: &[f64], kappa: f64) -> f64 {
    soft_min_impl(y, kappa, None)
}

pub fn soft_max(y: &[f64], kappa: f64) -> f64 {
    soft_max_impl(y, kappa, None)
}
