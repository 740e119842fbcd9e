//! The "stay slow until you have rested in the charging station" formula
//! `G[0,kw-1] phi1  U[0,K-kw]  G[0,kw-1] phi2`, and an independent staged
//! evaluation of it from windowed conjunctions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::predicate::PredicateTable;
use crate::robustness::{h_and, h_or};
use crate::signal::Signal;
use crate::stl::{assign_params, Formula, Interval, ParamTemplate};

/// Builds the until formula over `K` steps with window length `kw`, evaluated
/// at step 1. `slow` and `inside` are the predicate ids of `phi1`, `phi2`.
pub fn build_until_spec(steps: usize, kw: usize, slow: usize, inside: usize) -> Result<Formula> {
    if kw < 1 || kw > steps {
        return Err(Error::InvalidParams(format!(
            "window length {kw} must be between 1 and the horizon {steps}"
        )));
    }
    let window = Interval::new(0, kw - 1)?;
    let lhs = Formula::always(window, Formula::predicate(slow));
    let rhs = Formula::always(window, Formula::predicate(inside));
    Ok(Formula::until(Interval::new(0, steps - kw)?, lhs, rhs))
}

/// Same formula with `template` parameters on every key function.
pub fn build_until_spec_with(
    steps: usize,
    kw: usize,
    slow: usize,
    inside: usize,
    template: &ParamTemplate,
) -> Result<Formula> {
    assign_params(&build_until_spec(steps, kw, slow, inside)?, template, &BTreeMap::new())
}

/// Evaluation through the staged construction:
///
/// * `s1f_k`, `s1g_k`: conjunction of the window `k..k+kw-1` of each predicate,
/// * `s2_k`: conjunction of `s1f_1..s1f_k`,
/// * `s3_k`: conjunction of `(s2_k, s1g_k)`,
///
/// and finally the disjunction of `s3_1..s3_{K-kw+1}`.
pub fn staged_until_value(
    predicates: &PredicateTable,
    signal: &Signal,
    kw: usize,
    slow: usize,
    inside: usize,
    template: &ParamTemplate,
) -> Result<f64> {
    let steps = signal.steps();
    if kw < 1 || kw > steps {
        return Err(Error::InvalidParams(format!("window length {kw} exceeds horizon {steps}")));
    }
    let f = predicates.get(slow)?;
    let g = predicates.get(inside)?;
    let fv: Vec<f64> = (1..=steps).map(|k| f.value(signal.at(k))).collect();
    let gv: Vec<f64> = (1..=steps).map(|k| g.value(signal.at(k))).collect();
    let outer = steps - kw + 1;
    let window_params = template.make(kw)?;
    let s1f: Vec<f64> = (0..outer).map(|k| h_and(&fv[k..k + kw], window_params.view())).collect();
    let s1g: Vec<f64> = (0..outer).map(|k| h_and(&gv[k..k + kw], window_params.view())).collect();
    let pair = template.make(2)?;
    let s3 = (0..outer)
        .map(|k| {
            let s2 = h_and(&s1f[..=k], template.make(k + 1)?.view());
            Ok(h_and(&[s2, s1g[k]], pair.view()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(h_or(&s3, template.make(outer)?.view()))
}
