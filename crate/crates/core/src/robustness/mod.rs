//! Robustness of a formula on a signal under three semantics:
//!
//! * exact space robustness (min/max),
//! * its log-sum-exp smoothing with sharpness `kappa`,
//! * generalized-mean smooth robustness built from [`keyfn::h_and`] and
//!   [`keyfn::h_or`].
//!
//! All three share one structural recursion; they differ only in the
//! [`KeyFunctions`] that aggregate child values.

pub(crate) mod engine;
pub mod keyfn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predicate::PredicateTable;
use crate::signal::Signal;
use crate::stl::{Formula, KeyParams};

pub use engine::{GradTape, KeyCall, KeyRole};
pub use keyfn::{clip_sq, gm_mean_eps, h_and, h_or, pm_mean_eps, soft_max, soft_min, Side};

/// Default sharpness for the log-sum-exp semantics.
pub const DEFAULT_KAPPA: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "semantics", rename_all = "lowercase")]
pub enum Semantics {
    Dsr,
    Dssr { kappa: f64 },
    Dgmsr,
}

impl Semantics {
    pub fn name(&self) -> &'static str {
        match self {
            Semantics::Dsr => "dsr",
            Semantics::Dssr { .. } => "dssr",
            Semantics::Dgmsr => "dgmsr",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Semantics::Dssr { kappa } if !(*kappa > 0.0 && kappa.is_finite()) => {
                Err(Error::InvalidParams(format!("kappa must be positive, got {kappa}")))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn keys(&self) -> Box<dyn KeyFunctions> {
        match *self {
            Semantics::Dsr => Box::new(Exact),
            Semantics::Dssr { kappa } => Box::new(LogSumExp { kappa }),
            Semantics::Dgmsr => Box::new(GeneralizedMean),
        }
    }
}

/// The aggregators used in place of `min` (conjunction) and `max`
/// (disjunction). When `grad` is given it receives `d value / d y`; the
/// returned value must not depend on whether `grad` is requested.
pub trait KeyFunctions: Sync {
    fn name(&self) -> &'static str;
    fn conj(&self, y: &[f64], params: Option<KeyParams<'_>>, grad: Option<&mut [f64]>) -> f64;
    fn disj(&self, y: &[f64], params: Option<KeyParams<'_>>, grad: Option<&mut [f64]>) -> f64;
    /// Whether operator nodes must carry smoothing parameters.
    fn needs_params(&self) -> bool {
        false
    }
    fn differentiable(&self) -> bool {
        true
    }
}

/// `min` / `max`.
#[derive(Debug, Clone, Copy)]
pub struct Exact;

impl KeyFunctions for Exact {
    fn name(&self) -> &'static str {
        "dsr"
    }

    fn conj(&self, y: &[f64], _: Option<KeyParams<'_>>, _: Option<&mut [f64]>) -> f64 {
        y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn disj(&self, y: &[f64], _: Option<KeyParams<'_>>, _: Option<&mut [f64]>) -> f64 {
        y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn differentiable(&self) -> bool {
        false
    }
}

/// Log-sum-exp soft minimum and softmax-weighted average.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    pub kappa: f64,
}

impl KeyFunctions for LogSumExp {
    fn name(&self) -> &'static str {
        "dssr"
    }

    fn conj(&self, y: &[f64], _: Option<KeyParams<'_>>, grad: Option<&mut [f64]>) -> f64 {
        keyfn::soft_min_impl(y, self.kappa, grad)
    }

    fn disj(&self, y: &[f64], _: Option<KeyParams<'_>>, grad: Option<&mut [f64]>) -> f64 {
        keyfn::soft_max_impl(y, self.kappa, grad)
    }
}

/// `h_and` / `h_or`.
#[derive(Debug, Clone, Copy)]
pub struct GeneralizedMean;

impl KeyFunctions for GeneralizedMean {
    fn name(&self) -> &'static str {
        "dgmsr"
    }

    fn conj(&self, y: &[f64], params: Option<KeyParams<'_>>, grad: Option<&mut [f64]>) -> f64 {
        keyfn::h_and_impl(y, params.expect("generalized mean needs parameters"), grad)
    }

    fn disj(&self, y: &[f64], params: Option<KeyParams<'_>>, grad: Option<&mut [f64]>) -> f64 {
        keyfn::h_or_impl(y, params.expect("generalized mean needs parameters"), grad)
    }

    fn needs_params(&self) -> bool {
        true
    }
}

/// Robustness value plus its gradient with respect to the signal.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessOutput {
    pub value: f64,
    /// Row-major `steps x dim`; `gradient[(k - 1) * dim + i]` is the
    /// derivative with respect to component `i` at step `k`.
    pub gradient: Vec<f64>,
    pub steps: usize,
    pub dim: usize,
    /// Value of each visited `(node id, step)`.
    pub cache: Vec<((usize, usize), f64)>,
}

impl RobustnessOutput {
    /// Gradient row of 1-based step `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.gradient[(k - 1) * self.dim..k * self.dim]
    }
}

/// Satisfaction verdict: `satisfied` iff `value >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: f64,
    pub satisfied: bool,
}

/// Evaluates with arbitrary key functions.
pub fn eval_with(
    formula: &Formula,
    predicates: &PredicateTable,
    signal: &Signal,
    k: usize,
    keys: &dyn KeyFunctions,
) -> Result<f64> {
    Ok(engine::Evaluator::new(keys, predicates, signal, false)
        .run(formula, k)?
        .value())
}

/// Robustness of `formula` on `signal` at step `k`.
pub fn eval(
    formula: &Formula,
    predicates: &PredicateTable,
    signal: &Signal,
    k: usize,
    semantics: Semantics,
) -> Result<f64> {
    semantics.validate()?;
    eval_with(formula, predicates, signal, k, semantics.keys().as_ref())
}

/// Forward pass that also records visited values and key calls, without
/// local derivatives.
pub fn eval_traced(
    formula: &Formula,
    predicates: &PredicateTable,
    signal: &Signal,
    k: usize,
    semantics: Semantics,
) -> Result<GradTape> {
    semantics.validate()?;
    engine::Evaluator::new(semantics.keys().as_ref(), predicates, signal, false).run(formula, k)
}

pub fn check_sat(
    formula: &Formula,
    predicates: &PredicateTable,
    signal: &Signal,
    k: usize,
    semantics: Semantics,
) -> Result<Verdict> {
    let value = eval(formula, predicates, signal, k, semantics)?;
    Ok(Verdict {
        value,
        satisfied: value >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{assign_params, parse_formula, Interval, ParamTemplate};

    fn scalar_setup(text: &str, values: &[f64]) -> (Formula, PredicateTable, Signal) {
        let table = PredicateTable::components(1);
        let f = parse_formula(text, &table.names()).unwrap();
        let f = assign_params(&f, &ParamTemplate::default(), &Default::default()).unwrap();
        (f, table, Signal::scalar(values).unwrap())
    }

    #[test]
    fn always_is_min_and_eventually_is_max() {
        let (g, t, s) = scalar_setup("G[0,2] p0", &[1.0, -2.0, 3.0]);
        assert_eq!(eval(&g, &t, &s, 1, Semantics::Dsr).unwrap(), -2.0);
        let (f, t, s) = scalar_setup("F[0,2] p0", &[-1.0, -2.0, -3.0]);
        assert_eq!(eval(&f, &t, &s, 1, Semantics::Dsr).unwrap(), -1.0);
    }

    #[test]
    fn until_follows_expansion() {
        // max(min(1,-1), min(1,-1), min(1,2)) = 1
        let table = PredicateTable::components(2);
        let f = parse_formula("p0 U[0,2] p1", &table.names()).unwrap();
        let s = Signal::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(eval(&f, &table, &s, 1, Semantics::Dsr).unwrap(), 1.0);
    }

    #[test]
    fn horizon_violation_is_reported() {
        let (g, t, s) = scalar_setup("G[0,3] p0", &[1.0, 2.0, 3.0]);
        assert_eq!(
            eval(&g, &t, &s, 1, Semantics::Dsr),
            Err(Error::Horizon { node: 1, step: 4, horizon: 3 })
        );
        let (p, t, s) = scalar_setup("p0", &[1.0]);
        assert!(matches!(eval(&p, &t, &s, 0, Semantics::Dsr), Err(Error::Horizon { step: 0, .. })));
        // k = 0 is fine when every access is shifted onto the signal
        let (f, t, s) = scalar_setup("F[1,3] p0", &[1.0, 2.0, 3.0]);
        assert_eq!(eval(&f, &t, &s, 0, Semantics::Dsr).unwrap(), 3.0);
    }

    #[test]
    fn missing_params_rejected_for_gmsr_only() {
        let table = PredicateTable::components(1);
        let f = Formula::always(Interval::new(0, 1).unwrap(), Formula::predicate(0));
        let s = Signal::scalar(&[1.0, 2.0]).unwrap();
        assert_eq!(eval(&f, &table, &s, 1, Semantics::Dgmsr), Err(Error::MissingParams { node: 0 }));
        assert!(eval(&f, &table, &s, 1, Semantics::Dssr { kappa: 25.0 }).is_ok());
        assert!(eval(&f, &table, &s, 1, Semantics::Dssr { kappa: 0.0 }).is_err());
    }

    #[test]
    fn negation_flips_every_semantics() {
        let (f, t, s) = scalar_setup("G[0,2] (p0 | F[0,1] p0)", &[0.3, -1.2, 2.0, 0.1]);
        let (nf, _, _) = scalar_setup("!(G[0,2] (p0 | F[0,1] p0))", &[0.0]);
        for sem in [Semantics::Dsr, Semantics::Dssr { kappa: 25.0 }, Semantics::Dgmsr] {
            let a = eval(&f, &t, &s, 1, sem).unwrap();
            let b = eval(&nf, &t, &s, 1, sem).unwrap();
            assert_eq!(a, -b, "{sem:?}");
        }
    }

    #[test]
    fn check_sat_uses_nonnegative_value() {
        let (g, t, s) = scalar_setup("G[0,2] p0", &[1.0, 0.5, 3.0]);
        for sem in [Semantics::Dsr, Semantics::Dgmsr] {
            assert!(check_sat(&g, &t, &s, 1, sem).unwrap().satisfied);
        }
        let (g, t, s) = scalar_setup("G[0,2] p0", &[1.0, -0.5, 3.0]);
        let v = check_sat(&g, &t, &s, 1, Semantics::Dgmsr).unwrap();
        assert!(!v.satisfied && v.value < 0.0);
    }

    #[test]
    fn traced_calls_match_weight_lengths() {
        let (f, t, s) = scalar_setup("(p0 & G[0,2] p0) U[1,3] (F[0,1] p0 | p0)", &[0.5; 8]);
        let tape = eval_traced(&f, &t, &s, 1, Semantics::Dgmsr).unwrap();
        assert!(!tape.key_calls().is_empty());
        for call in tape.key_calls() {
            assert_eq!(Some(call.input_len), call.weight_len, "{call:?}");
        }
        let until_roles: Vec<KeyRole> = tape
            .key_calls()
            .iter()
            .filter(|c| c.node == 0)
            .map(|c| c.role)
            .collect();
        assert_eq!(until_roles.iter().filter(|r| **r == KeyRole::UntilOuter).count(), 1);
        assert_eq!(until_roles.iter().filter(|r| **r == KeyRole::UntilPrefix).count(), 3);
    }
}
