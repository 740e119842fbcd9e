//! Gradient ascent on a single conjunction or disjunction of five scalar
//! predicates, showing how each semantics distributes the gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{grad_h_and, grad_h_or, grad_soft_max, grad_soft_min};
use crate::robustness::Semantics;
use crate::stl::ParamTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoKind {
    Conjunction,
    Disjunction,
}

pub const DEMO_STEP: f64 = 0.05;
pub const DEMO_ITERATIONS: usize = 500;

/// Mixed-sign starting values, spaced at least one apart.
pub const MIXED_INIT: [f64; 5] = [-3.0, -1.5, 0.5, 2.0, 3.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentTrace {
    pub kind: DemoKind,
    pub semantics: Semantics,
    /// Predicate values before each iteration and after the last one.
    pub values: Vec<Vec<f64>>,
    /// Robustness at each entry of `values`.
    pub robustness: Vec<f64>,
    /// Gradient used at each iteration.
    pub weights: Vec<Vec<f64>>,
}

fn key_gradient(kind: DemoKind, semantics: Semantics, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let t = ParamTemplate::default();
    let params = t.make(y.len())?;
    Ok(match (semantics, kind) {
        (Semantics::Dgmsr, DemoKind::Conjunction) => grad_h_and(y, params.view()),
        (Semantics::Dgmsr, DemoKind::Disjunction) => grad_h_or(y, params.view()),
        (Semantics::Dssr { kappa }, DemoKind::Conjunction) => grad_soft_min(y, kappa),
        (Semantics::Dssr { kappa }, DemoKind::Disjunction) => grad_soft_max(y, kappa),
        (Semantics::Dsr, _) => return Err(Error::NoGradient("dsr")),
    })
}

/// Plain gradient ascent `y <- y + step * dy` on the identity predicates
/// `f_i(y) = y_i`.
pub fn operator_demo(
    kind: DemoKind,
    init: &[f64],
    semantics: Semantics,
    step: f64,
    iterations: usize,
) -> Result<AscentTrace> {
    semantics.validate()?;
    if init.is_empty() || !init.iter().all(|v| v.is_finite()) {
        return Err(Error::Signal("demo needs finite initial values".into()));
    }
    let mut y = init.to_vec();
    let mut trace = AscentTrace {
        kind,
        semantics,
        values: Vec::with_capacity(iterations + 1),
        robustness: Vec::with_capacity(iterations + 1),
        weights: Vec::with_capacity(iterations),
    };
    for _ in 0..iterations {
        let (value, dy) = key_gradient(kind, semantics, &y)?;
        trace.values.push(y.clone());
        trace.robustness.push(value);
        for (v, d) in y.iter_mut().zip(&dy) {
            *v += step * d;
        }
        trace.weights.push(dy);
    }
    let (value, _) = key_gradient(kind, semantics, &y)?;
    trace.values.push(y);
    trace.robustness.push(value);
    Ok(trace)
}

/// Largest gradient weight on a coordinate other than the smallest one,
/// over iterations where the two smallest values are at least `gap` apart.
/// `None` when no iteration has such a gap.
pub fn max_masked_weight(trace: &AscentTrace, gap: f64) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (y, dy) in trace.values.iter().zip(&trace.weights) {
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        if y.len() < 2 || y[order[1]] - y[order[0]] < gap {
            continue;
        }
        let w = order[1..].iter().map(|&i| dy[i].abs()).fold(0.0, f64::max);
        worst = Some(worst.map_or(w, |m: f64| m.max(w)));
    }
    worst
}

/// Whether, at every iteration with both negative and positive values, only
/// the coordinates on one side move: those with `y_i < 0` when `negative`,
/// else those with `y_i > 0`. Coordinates on the other side must get an
/// exactly zero gradient. Returns `false` if no iteration has mixed signs.
pub fn moves_only_side(trace: &AscentTrace, negative: bool) -> bool {
    let mut mixed = 0;
    for (y, dy) in trace.values.iter().zip(&trace.weights) {
        if !(y.iter().any(|v| *v < 0.0) && y.iter().any(|v| *v > 0.0)) {
            continue;
        }
        mixed += 1;
        for (v, d) in y.iter().zip(dy) {
            let active = if negative { *v < 0.0 } else { *v > 0.0 };
            let masked = if negative { *v > 0.0 } else { *v < 0.0 };
            if (active && !(*d > 0.0)) || (masked && *d != 0.0) {
                return false;
            }
        }
    }
    mixed > 0
}
