//! Analytic gradients of the smooth semantics.
//!
//! The forward pass records, for every `(node, step)` and every until
//! sub-term, the local derivative of its key function with respect to each
//! input. [`GradTape::backward`] then accumulates adjoints from the root
//! down to the predicate leaves and multiplies by the user-supplied
//! predicate gradients.

use crate::error::{Error, Result};
use crate::predicate::PredicateTable;
use crate::robustness::engine::Evaluator;
use crate::robustness::{keyfn, eval, RobustnessOutput, Semantics};
use crate::signal::Signal;
use crate::stl::{Formula, KeyParams};

pub use crate::robustness::GradTape;

/// Central-difference step used by [`fd_check`] callers by default.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

pub fn grad_h_and(y: &[f64], params: KeyParams<'_>) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; y.len()];
    let v = keyfn::h_and_impl(y, params, Some(&mut g));
    (v, g)
}

pub fn grad_h_or(y: &[f64], params: KeyParams<'_>) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; y.len()];
    let v = keyfn::h_or_impl(y, params, Some(&mut g));
    (v, g)
}

pub fn grad_soft_min(y: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; y.len()];
    let v = keyfn::soft_min_impl(y, kappa, Some(&mut g));
    (v, g)
}

pub fn grad_soft_max(y: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; y.len()];
    let v = keyfn::soft_max_impl(y, kappa, Some(&mut g));
    (v, g)
}

/// Forward pass with local derivatives recorded.
pub fn record_tape(
    formula: &Formula,
    predicates: &PredicateTable,
    signal: &Signal,
    k: usize,
    semantics: Semantics,
) -> Result<GradTape> {
    semantics.validate()?;
    let keys = semantics.keys();
    if !keys.differentiable() {
        return Err(Error::NoGradient(keys.name()));
    }
    Evaluator::new(keys.as_ref(), predicates, signal, true).run(formula, k)
}

/// Robustness value and its gradient with respect to every signal entry.
pub fn grad_eval(
    formula: &Formula,
    predicates: &PredicateTable,
    signal: &Signal,
    k: usize,
    semantics: Semantics,
) -> Result<RobustnessOutput> {
    let tape = record_tape(formula, predicates, signal, k, semantics)?;
    let gradient = tape.backward(predicates, signal)?;
    let mut cache: Vec<_> = tape.node_values().collect();
    cache.sort_by_key(|&(key, _)| key);
    Ok(RobustnessOutput {
        value: tape.value(),
        gradient,
        steps: signal.steps(),
        dim: signal.dim(),
        cache,
    })
}

/// Largest `|analytic - central FD| / max(1, |analytic|)` over all signal
/// entries.
pub fn fd_check(
    formula: &Formula,
    predicates: &PredicateTable,
    signal: &Signal,
    k: usize,
    semantics: Semantics,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParams(format!("finite-difference step must be positive, got {h}")));
    }
    let out = grad_eval(formula, predicates, signal, k, semantics)?;
    let mut probe = signal.clone();
    let mut worst: f64 = 0.0;
    for i in 0..signal.as_slice().len() {
        let x0 = signal.as_slice()[i];
        probe.as_mut_slice()[i] = x0 + h;
        let up = eval(formula, predicates, &probe, k, semantics)?;
        probe.as_mut_slice()[i] = x0 - h;
        let down = eval(formula, predicates, &probe, k, semantics)?;
        probe.as_mut_slice()[i] = x0;
        let fd = (up - down) / (2.0 * h);
        let a = out.gradient[i];
        worst = worst.max((a - fd).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robustness::h_and;
    use crate::stl::{assign_params, parse_formula, ParamTemplate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-8;

    fn fd_vec(f: impl Fn(&[f64]) -> f64, y: &[f64], h: f64) -> Vec<f64> {
        (0..y.len())
            .map(|i| {
                let mut p = y.to_vec();
                let mut m = y.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    /// Draws a vector whose entries stay at least 1e-2 away from zero, where
    /// the key functions are smooth enough for FD at h = 1e-5.
    fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let m = rng.gen_range(1e-2..4.0);
                if rng.gen_bool(0.5) { m } else { -m }
            })
            .collect()
    }

    #[test]
    fn h_and_ratio_examples() {
        let w = [1, 1];
        let kp = KeyParams { eps: EPS, p: 1, w: &w };
        let (_, g) = grad_h_and(&[-1.0, -2.0], kp);
        assert!((g[1] / g[0] - 2.0).abs() < 1e-12);
        let (_, g) = grad_h_and(&[-1.0, 3.0], kp);
        assert_eq!(g[1], 0.0);
        assert!(g[0] > 0.0);
    }

    #[test]
    fn h_or_ratio_examples() {
        let w = [1, 1];
        let kp = KeyParams { eps: EPS, p: 1, w: &w };
        let (_, g) = grad_h_or(&[-1.0, -4.0], kp);
        assert!((g[0] / g[1] - 4.0).abs() < 1e-9);
        let (_, g) = grad_h_or(&[2.0, -1.0], kp);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn key_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.gen_range(1..7);
            let y = away_from_zero(&mut rng, n);
            let p = rng.gen_range(1..4);
            let w: Vec<u32> = (0..n).map(|_| rng.gen_range(1..4)).collect();
            let kp = KeyParams { eps: EPS, p, w: &w };
            for (grad, f) in [
                (grad_h_and(&y, kp).1, fd_vec(|v| keyfn::h_and(v, kp), &y, 1e-5)),
                (grad_h_or(&y, kp).1, fd_vec(|v| keyfn::h_or(v, kp), &y, 1e-5)),
                (grad_soft_min(&y, 25.0).1, fd_vec(|v| keyfn::soft_min(v, 25.0), &y, 1e-5)),
                (grad_soft_max(&y, 25.0).1, fd_vec(|v| keyfn::soft_max(v, 25.0), &y, 1e-5)),
            ] {
                for (a, b) in grad.iter().zip(&f) {
                    assert!((a - b).abs() / a.abs().max(1.0) <= 1e-4, "{y:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn softmin_weights() {
        let (_, g) = grad_soft_min(&[0.0, 1.0], 25.0);
        assert!(g[1] <= 2e-11);
        assert!((g[1] - (-25.0f64).exp() / (1.0 + (-25.0f64).exp())).abs() < 1e-20);
        let (_, g) = grad_soft_min(&[0.4, 0.4], 25.0);
        assert_eq!(g, vec![0.5, 0.5]);
    }

    #[test]
    fn value_from_grad_path_is_bitwise_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let y = away_from_zero(&mut rng, 5);
            let w = [1, 2, 1, 3, 1];
            let kp = KeyParams { eps: EPS, p: 2, w: &w };
            assert_eq!(grad_h_and(&y, kp).0.to_bits(), h_and(&y, kp).to_bits());
        }
    }

    fn setup(text: &str, rows: &[Vec<f64>]) -> (Formula, PredicateTable, Signal) {
        let table = PredicateTable::components(rows[0].len());
        let f = parse_formula(text, &table.names()).unwrap();
        let f = assign_params(&f, &ParamTemplate::default(), &Default::default()).unwrap();
        (f, table, Signal::from_rows(rows).unwrap())
    }

    #[test]
    fn predicate_gradient_lands_in_its_row() {
        let (f, t, s) = setup("p1", &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let out = grad_eval(&f, &t, &s, 2, Semantics::Dgmsr).unwrap();
        assert_eq!(out.value, 4.0);
        assert_eq!(out.gradient, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn negation_negates_gradient() {
        let rows = vec![vec![0.5, -1.0], vec![2.0, 0.3], vec![-0.7, 1.1]];
        let (f, t, s) = setup("G[0,2] (p0 | p1)", &rows);
        let (nf, _, _) = setup("!(G[0,2] (p0 | p1))", &rows);
        for sem in [Semantics::Dgmsr, Semantics::Dssr { kappa: 25.0 }] {
            let a = grad_eval(&f, &t, &s, 1, sem).unwrap();
            let b = grad_eval(&nf, &t, &s, 1, sem).unwrap();
            for (x, y) in a.gradient.iter().zip(&b.gradient) {
                assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn eventually_example_passes_fd() {
        let rows: Vec<Vec<f64>> = [-1.3, -0.4, 0.8, -2.2, 0.15, 1.7].iter().map(|&v| vec![v]).collect();
        let (f, t, s) = setup("F[1,5] p0", &rows);
        for sem in [Semantics::Dgmsr, Semantics::Dssr { kappa: 25.0 }] {
            let err = fd_check(&f, &t, &s, 0, sem, 1e-5).unwrap();
            assert!(err <= 1e-4, "{sem:?}: {err}");
            let out = grad_eval(&f, &t, &s, 0, sem).unwrap();
            assert_eq!(out.value.to_bits(), eval(&f, &t, &s, 0, sem).unwrap().to_bits());
        }
    }

    #[test]
    fn p1_and_p2_both_pass_fd() {
        let rows = vec![vec![0.5, -1.0], vec![2.0, 0.3], vec![-0.7, 1.1], vec![0.9, -0.2]];
        let table = PredicateTable::components(2);
        let f = parse_formula("(p0 & p1) U[0,2] (F[0,1] p1)", &table.names()).unwrap();
        let s = Signal::from_rows(&rows).unwrap();
        for p in [1, 2] {
            let tpl = ParamTemplate { p, ..Default::default() };
            let f = assign_params(&f, &tpl, &Default::default()).unwrap();
            let err = fd_check(&f, &table, &s, 1, Semantics::Dgmsr, 1e-5).unwrap();
            assert!(err <= 1e-4, "p={p}: {err}");
        }
    }

    #[test]
    fn identical_columns_give_identical_gradients() {
        let table = PredicateTable::components(2);
        // symmetric predicate in the two components
        let f = parse_formula("G[0,2] (p0 & p1)", &table.names()).unwrap();
        let f = assign_params(&f, &ParamTemplate::default(), &Default::default()).unwrap();
        let s = Signal::from_rows(&[vec![0.4, 0.4], vec![-1.0, -1.0], vec![2.0, 2.0]]).unwrap();
        let out = grad_eval(&f, &table, &s, 1, Semantics::Dgmsr).unwrap();
        for k in 1..=3 {
            assert_eq!(out.row(k)[0], out.row(k)[1]);
        }
    }

    #[test]
    fn exact_semantics_has_no_gradient() {
        let (f, t, s) = setup("p0", &[vec![1.0]]);
        assert_eq!(grad_eval(&f, &t, &s, 1, Semantics::Dsr), Err(Error::NoGradient("dsr")));
        assert!(fd_check(&f, &t, &s, 1, Semantics::Dgmsr, 0.0).is_err());
    }

    #[test]
    fn weights_sum_to_sensitivity() {
        let (f, t, s) = setup("G[0,3] p0", &[vec![1.0], vec![2.0], vec![0.5], vec![3.0]]);
        let tape = record_tape(&f, &t, &s, 1, Semantics::Dssr { kappa: 25.0 }).unwrap();
        let w = tape.local_weights(0, 1).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let grad = tape.backward(&t, &s).unwrap();
        for (a, b) in grad.iter().zip(&w) {
            assert_eq!(a, b);
        }
    }
}
