//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 3 and 6 are unattainable as stated (see the README). They are
//! still run and reported as FAIL, but only the parts of them that are
//! attainable decide the exit status; every other criterion must pass.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stl_gmsr::grad::{grad_h_and, grad_h_or};
use stl_gmsr::harness::{fuzz_sign_agreement, fuzz_sign_agreement_with, grad_check, FuzzConfig, GradCheckConfig, SignFlippedAnd};
use stl_gmsr::problems::{
    locality_config, locality_semantics, max_masked_weight, moves_only_side, operator_demo, quadrotor_config,
    solve_locality, solve_quadrotor, staged_until_value, DemoKind, LocalityParams, QuadrotorParams, DEMO_ITERATIONS,
    DEMO_STEP, MIXED_INIT,
};
use stl_gmsr::robustness::{h_and, h_or};
use stl_gmsr::{eval, GmsrParams, Semantics, Signal};

/// Criteria that cannot pass as specified.
const UNATTAINABLE: &[usize] = &[3, 6];

type Criterion = (usize, &'static str, u64, fn() -> Outcome);

struct Outcome {
    passed: bool,
    /// For unattainable criteria: whether the attainable parts hold.
    attainable_ok: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self {
            passed,
            attainable_ok: passed,
            detail,
        }
    }
}

fn fuzz_signs() -> Outcome {
    let summary = fuzz_sign_agreement(&FuzzConfig::default()).expect("fuzz run");
    let mutant = fuzz_sign_agreement_with(
        &FuzzConfig {
            count: 1000,
            ..FuzzConfig::default()
        },
        &SignFlippedAnd,
    )
    .expect("mutant fuzz run");
    let passed = summary.compared > 0 && summary.disagreements.is_empty() && !mutant.disagreements.is_empty();
    Outcome::new(
        passed,
        format!(
            "{} compared, {} in the zero band, {} disagreements; sign-flipped conjunction caught {} times in 1000",
            summary.compared,
            summary.skipped,
            summary.disagreements.len(),
            mutant.disagreements.len()
        ),
    )
}

fn gradients() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (semantics, seed) in [(Semantics::Dgmsr, 42), (Semantics::Dssr { kappa: 25.0 }, 4242)] {
        let s = grad_check(&GradCheckConfig::new(semantics, 1000, seed)).expect("gradient check");
        passed &= s.passed() && s.trials == 1000;
        parts.push(format!(
            "{}: max rel err {:.1e} (near zero {:.1e} over {} instances), {} failures",
            semantics.name(),
            s.max_error,
            s.max_error_near_zero,
            s.near_zero_trials,
            s.failures.len()
        ));
    }
    Outcome::new(passed, parts.join("; "))
}

/// `|min| (1 - (S + eps^p / |min|^(2p))^(1/2p))`, the exact gap between
/// `h_and(y)` and `min(y) + sqrt(eps)` when some entry is negative, with
/// `S = sum_i (w_i / W) (|y_i|_- / |min y|)^(2p)`.
fn lemma_gap(y: &[f64], w: &[u32], eps: f64, p: u32) -> f64 {
    let m = y.iter().copied().fold(f64::INFINITY, f64::min).abs();
    let total: f64 = w.iter().map(|&v| v as f64).sum();
    let s: f64 = y
        .iter()
        .zip(w)
        .map(|(v, &wi)| wi as f64 / total * (v.min(0.0).abs() / m).powi(2 * p as i32))
        .sum();
    let floor = eps.powi(p as i32) / m.powi(2 * p as i32);
    m * (1.0 - (s + floor).powf(1.0 / (2.0 * p as f64)))
}

fn limit_behavior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eps = 1e-8f64;
    let (mut worst_and, mut worst_or, mut within) = (0.0f64, 0.0f64, 0);
    let mut trend_ok = true;
    let trials = 100;
    for _ in 0..trials {
        let m = rng.gen_range(2..=8);
        let mut y: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
        if y.iter().all(|v| *v >= -0.1) {
            y[0] = rng.gen_range(-5.0..-0.1);
        }
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let params = GmsrParams::uniform(eps, 64, m).unwrap();
        let err_and = (h_and(&y, params.view()) - (min + eps.sqrt())).abs();
        // mirrored: max(-y) = -min(y) > 0.1
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let err_or = (h_or(&neg, params.view()) - (-min - eps.sqrt())).abs();
        worst_and = worst_and.max(err_and);
        worst_or = worst_or.max(err_or);
        within += usize::from(err_and <= 1e-3 && err_or <= 1e-3);
        // the gap is the closed form above and shrinks monotonically in p
        let mut last = f64::INFINITY;
        for p in [1, 2, 4, 8, 16, 32, 64] {
            let w = vec![1; m];
            let params = GmsrParams::new(eps, p, w.clone()).unwrap();
            let gap = h_and(&y, params.view()) - (min + eps.sqrt());
            let expected = lemma_gap(&y, &w, eps, p);
            trend_ok &= (gap - expected).abs() <= 1e-9 * (1.0 + expected) && gap <= last;
            last = gap;
        }
    }
    Outcome {
        passed: worst_and <= 1e-3 && worst_or <= 1e-3,
        attainable_ok: trend_ok,
        detail: format!(
            "p = 64: max |h_and - (min + 1e-4)| = {worst_and:.3e}, mirrored h_or {worst_or:.3e}, {within}/{trials} within 1e-3; \
             the gap equals |min| (1 - S^(1/2p)) and decreases in p: {trend_ok}"
        ),
    }
}

#[derive(Clone, Copy)]
enum Law {
    /// h_and, all entries positive: dy_i / w_i proportional to 1 / y_i.
    AndPositive,
    /// h_and, mixed signs: dy_i / w_i proportional to |y_i|^(2p-1) on
    /// negative entries, exactly 0 elsewhere.
    AndMixed,
    /// h_or, all entries negative: dy_i / w_i proportional to 1 / |y_i|.
    OrNegative,
    /// h_or, mixed signs: dy_i / w_i proportional to y_i^(2p-1) on
    /// positive entries, exactly 0 elsewhere.
    OrMixed,
}

fn random_entries(rng: &mut ChaCha8Rng, law: Law) -> Vec<f64> {
    loop {
        let m = rng.gen_range(2..=8);
        let y: Vec<f64> = (0..m)
            .map(|_| {
                let mag = rng.gen_range(0.1..5.0);
                match law {
                    Law::AndPositive => mag,
                    Law::OrNegative => -mag,
                    Law::AndMixed | Law::OrMixed => {
                        if rng.gen_bool(0.5) {
                            mag
                        } else {
                            -mag
                        }
                    }
                }
            })
            .collect();
        let mixed = y.iter().any(|v| *v < 0.0) && y.iter().any(|v| *v > 0.0);
        if matches!(law, Law::AndPositive | Law::OrNegative) || mixed {
            return y;
        }
    }
}

/// Worst relative deviation from the law, or `None` if a masked entry has a
/// nonzero derivative.
fn law_error(law: Law, y: &[f64], w: &[u32], p: u32) -> Option<f64> {
    let params = GmsrParams::new(1e-8, p, w.to_vec()).unwrap();
    let (_, dy) = match law {
        Law::AndPositive | Law::AndMixed => grad_h_and(y, params.view()),
        Law::OrNegative | Law::OrMixed => grad_h_or(y, params.view()),
    };
    let expected = |v: f64| -> Option<f64> {
        let e = 2 * p as i32 - 1;
        match law {
            Law::AndPositive | Law::OrNegative => Some(1.0 / v.abs()),
            Law::AndMixed => (v < 0.0).then(|| v.abs().powi(e)),
            Law::OrMixed => (v > 0.0).then(|| v.powi(e)),
        }
    };
    let active: Vec<usize> = (0..y.len()).filter(|&i| expected(y[i]).is_some()).collect();
    if (0..y.len()).any(|i| expected(y[i]).is_none() && dy[i] != 0.0) {
        return None;
    }
    let r = active[0];
    let base = dy[r] / w[r] as f64 / expected(y[r]).unwrap();
    if base.is_nan() || base <= 0.0 {
        return Some(f64::INFINITY);
    }
    Some(
        active
            .iter()
            .map(|&i| {
                let ratio = dy[i] / w[i] as f64 / expected(y[i]).unwrap();
                (ratio / base - 1.0).abs()
            })
            .fold(0.0, f64::max),
    )
}

fn ratio_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut passed = true;
    let mut parts = Vec::new();
    for (law, name) in [
        (Law::AndPositive, "and/positive"),
        (Law::AndMixed, "and/mixed"),
        (Law::OrNegative, "or/negative"),
        (Law::OrMixed, "or/mixed"),
    ] {
        let (mut worst, mut unmasked) = (0.0f64, 0);
        for _ in 0..1000 {
            let y = random_entries(&mut rng, law);
            let w: Vec<u32> = (0..y.len()).map(|_| rng.gen_range(1..=3)).collect();
            let p = rng.gen_range(1..=4);
            match law_error(law, &y, &w, p) {
                Some(e) => worst = worst.max(e),
                None => unmasked += 1,
            }
        }
        passed &= worst <= 1e-6 && unmasked == 0;
        parts.push(format!("{name}: max rel dev {worst:.1e}, {unmasked} nonzero masked derivatives"));
    }
    Outcome::new(passed, parts.join("; "))
}

fn locality() -> Outcome {
    let params = LocalityParams::default();
    let config = locality_config();
    let budget = Duration::from_secs(30);
    let mut passed = true;
    let mut parts = Vec::new();
    for gmsr in [true, false] {
        let start = Instant::now();
        let solved = solve_locality(&params, locality_semantics(gmsr), &config).expect("locality solve");
        let elapsed = start.elapsed();
        let c = &solved.check;
        let outcome_ok = if gmsr {
            c.dsr_value >= 0.0 && !c.nodes_inside.is_empty()
        } else {
            c.objective_value < 0.0 && c.nodes_inside.is_empty()
        };
        passed &= outcome_ok && solved.report.converged() && elapsed <= budget;
        parts.push(format!(
            "{}: {:?} after {} iterations in {:.1}s, objective {:.4}, exact {:.4}, nodes inside {:?}",
            if gmsr { "dgmsr" } else { "dssr" },
            solved.report.status,
            solved.report.iterations,
            elapsed.as_secs_f64(),
            c.objective_value,
            c.dsr_value,
            c.nodes_inside
        ));
    }
    Outcome::new(passed, parts.join("; "))
}

fn quadrotor() -> Outcome {
    let params = QuadrotorParams::default();
    let solved = solve_quadrotor(&params, &quadrotor_config()).expect("quadrotor solve");
    let c = &solved.check;
    let z = &solved.trajectory;
    let replay = solved.problem.replay(z).expect("replay");
    let replay_dev = (1..=z.nodes)
        .flat_map(|k| replay.x(k).iter().zip(z.x(k)).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0f64, f64::max);
    let tol = 1e-6;
    let attainable = solved.report.converged()
        && c.path_violation <= tol
        && c.defect_l1 <= tol
        && c.boundary_error <= tol
        && replay_dev <= 1e-4;
    Outcome {
        passed: attainable && c.satisfied(),
        attainable_ok: attainable,
        detail: format!(
            "{:?} after {} iterations; exact robustness {:.4}, smooth {:.4}, window start {:?}; \
             path violation {:.1e}, defect l1 {:.1e}, boundary error {:.1e}, replay deviation {:.1e}",
            solved.report.status,
            solved.report.iterations,
            c.dsr_value,
            c.gmsr_value,
            c.window_start,
            c.path_violation,
            c.defect_l1,
            c.boundary_error,
            replay_dev
        ),
    }
}

fn staged_until() -> Outcome {
    let params = QuadrotorParams::default();
    let (formula, table) = params.formula().unwrap();
    let (slow, inside) = (table.id("slow").unwrap(), table.id("inside").unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let data: Vec<f64> = (0..params.nodes)
            .flat_map(|_| {
                let r: Vec<f64> = params.station.iter().map(|c| c + rng.gen_range(-0.4..0.4)).collect();
                let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                [r, v].concat()
            })
            .collect();
        let signal = Signal::new(params.nodes, 6, data).unwrap();
        let direct = eval(&formula, &table, &signal, 1, Semantics::Dgmsr).unwrap();
        let staged = staged_until_value(&table, &signal, params.window, slow, inside, &params.template()).unwrap();
        worst = worst.max((direct - staged).abs());
    }
    Outcome::new(worst <= 1e-12, format!("max |direct - staged| = {worst:.1e} over 100 signals"))
}

fn operator_demos() -> Outcome {
    let run = |kind, semantics| operator_demo(kind, &MIXED_INIT, semantics, DEMO_STEP, DEMO_ITERATIONS).unwrap();
    let dssr = Semantics::Dssr { kappa: 25.0 };
    let masked = max_masked_weight(&run(DemoKind::Conjunction, dssr), 1.0);
    let and_negative = moves_only_side(&run(DemoKind::Conjunction, Semantics::Dgmsr), true);
    let or_positive = moves_only_side(&run(DemoKind::Disjunction, Semantics::Dgmsr), false);
    Outcome::new(
        masked.is_some_and(|w| w < 1e-6) && and_negative && or_positive,
        format!(
            "dssr conjunction non-extremal weight {}; dgmsr conjunction moves only negatives: {and_negative}; \
             dgmsr disjunction moves only positives: {or_positive}",
            masked.map_or("n/a".into(), |w| format!("{w:.1e}"))
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (1, "sign agreement fuzz", 60, fuzz_signs),
        (2, "gradient correctness", 120, gradients),
        (3, "limit behavior at p = 64", 5, limit_behavior),
        (4, "gradient ratio laws", 5, ratio_laws),
        (5, "locality dichotomy", 60, locality),
        (6, "quadrotor scenario", 600, quadrotor),
        (7, "staged until equivalence", 5, staged_until),
        (8, "operator demos", 10, operator_demos),
    ];
    let mut ok = true;
    for (n, name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let passed = outcome.passed && in_time;
        let known = UNATTAINABLE.contains(&n);
        let note = match (passed, known) {
            (false, true) => " [unattainable as specified]",
            _ => "",
        };
        println!(
            "criterion {n} {}: {name} ({:.1}s of {budget}s){note}: {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
        ok &= if known { outcome.attainable_ok && in_time } else { passed };
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
