//! Seeded random instances and the two verification batteries built on them:
//! sign agreement between the generalized-mean and exact semantics, and
//! analytic-versus-finite-difference gradient checks.
//!
//! Trial `i` of a run with seed `s` draws from its own generator seeded with
//! `s + i`, so trials are independent of scheduling and run in parallel.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grad::{fd_check, grad_eval, DEFAULT_FD_STEP};
use crate::par;
use crate::predicate::{PredicateDef, PredicateTable};
use crate::robustness::{eval, eval_with, GeneralizedMean, KeyFunctions, Semantics};
use crate::signal::Signal;
use crate::stl::{assign_params, formula_to_json, Formula, Interval, KeyParams, ParamTemplate};

/// Serializable description of a random predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredicateSpec {
    /// `c'x + d`
    Affine { coeffs: Vec<f64>, offset: f64 },
    /// `r^2 - ||x - m||^2`
    Quadratic { center: Vec<f64>, radius: f64 },
}

impl PredicateSpec {
    pub fn to_def(&self, name: String) -> PredicateDef {
        match self {
            PredicateSpec::Affine { coeffs, offset } => PredicateDef::affine(name, coeffs.clone(), *offset),
            PredicateSpec::Quadratic { center, radius } => {
                let (c, r2) = (center.clone(), radius * radius);
                let cg = center.clone();
                PredicateDef::new(
                    name,
                    move |x: &[f64]| r2 - x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
                    move |x: &[f64], g: &mut [f64]| {
                        for ((gi, a), b) in g.iter_mut().zip(x).zip(&cg) {
                            *gi = -2.0 * (a - b);
                        }
                    },
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub max_depth: usize,
    pub max_steps: usize,
    pub max_dim: usize,
    /// Signal entries are drawn from `[-value_range, value_range]`.
    pub value_range: f64,
    pub max_predicates: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            max_steps: 8,
            max_dim: 3,
            value_range: 5.0,
            max_predicates: 3,
        }
    }
}

/// A formula, its predicates and a signal, evaluated at step 1.
#[derive(Debug, Clone)]
pub struct Instance {
    pub formula: Formula,
    pub specs: Vec<PredicateSpec>,
    pub predicates: PredicateTable,
    pub signal: Signal,
}

/// Reproducible record of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub seed: u64,
    pub formula: serde_json::Value,
    pub formula_text: String,
    /// Predicate definitions by name, as accepted by `stlgmsr eval --predicates`.
    pub predicates: BTreeMap<String, PredicateSpec>,
    pub signal: Vec<Vec<f64>>,
}

impl Instance {
    pub fn record(&self, seed: u64) -> InstanceRecord {
        let table = &self.predicates;
        InstanceRecord {
            seed,
            formula: serde_json::from_str(&formula_to_json(&self.formula, table)).expect("formula json"),
            formula_text: self
                .formula
                .to_text_with(&|id| table.name_of(id).unwrap_or("?").to_string()),
            predicates: self
                .specs
                .iter()
                .enumerate()
                .map(|(i, s)| (predicate_name(i), s.clone()))
                .collect(),
            signal: (1..=self.signal.steps()).map(|k| self.signal.at(k).to_vec()).collect(),
        }
    }
}

/// Name of the `i`-th random predicate; distinct from the component
/// predicates `p0, p1, ...`.
fn predicate_name(i: usize) -> String {
    format!("f{i}")
}

fn random_spec(rng: &mut impl Rng, dim: usize) -> PredicateSpec {
    if rng.gen_bool(0.5) {
        PredicateSpec::Affine {
            coeffs: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            offset: rng.gen_range(-2.0..2.0),
        }
    } else {
        PredicateSpec::Quadratic {
            center: (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            radius: rng.gen_range(0.5..4.0),
        }
    }
}

/// Random formula of depth at most `depth` whose horizon fits in `budget`.
fn random_formula(rng: &mut ChaCha8Rng, depth: usize, budget: usize, preds: usize) -> Formula {
    if depth <= 1 || rng.gen_bool(0.2) {
        return Formula::predicate(rng.gen_range(0..preds));
    }
    let sub = |rng: &mut ChaCha8Rng, budget| random_formula(rng, depth - 1, budget, preds);
    let interval = |rng: &mut ChaCha8Rng| {
        let b = rng.gen_range(0..=budget);
        let a = rng.gen_range(0..=b);
        Interval::new(a, b).expect("a <= b")
    };
    match rng.gen_range(0..7) {
        0 => Formula::not(sub(rng, budget)),
        1 | 2 => {
            let n = rng.gen_range(2..=3);
            let children = (0..n).map(|_| sub(rng, budget)).collect();
            if rng.gen_bool(0.5) {
                Formula::and(children).expect("two or more children")
            } else {
                Formula::or(children).expect("two or more children")
            }
        }
        3 => Formula::implies(sub(rng, budget), sub(rng, budget)),
        4 => {
            let iv = interval(rng);
            Formula::eventually(iv, sub(rng, budget - iv.b))
        }
        5 => {
            let iv = interval(rng);
            Formula::always(iv, sub(rng, budget - iv.b))
        }
        _ => {
            let iv = interval(rng);
            let lhs = sub(rng, budget - iv.b);
            Formula::until(iv, lhs, sub(rng, budget - iv.b))
        }
    }
}

/// Draws the instance of one seed.
pub fn random_instance(seed: u64, config: &InstanceConfig) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = rng.gen_range(1..=config.max_steps.max(1));
    let dim = rng.gen_range(1..=config.max_dim.max(1));
    let npred = rng.gen_range(1..=config.max_predicates.max(1));
    let specs: Vec<PredicateSpec> = (0..npred).map(|_| random_spec(&mut rng, dim)).collect();
    let mut predicates = PredicateTable::new();
    for (i, s) in specs.iter().enumerate() {
        predicates.insert(s.to_def(predicate_name(i)));
    }
    let depth = rng.gen_range(1..=config.max_depth.max(1));
    let formula = random_formula(&mut rng, depth, steps - 1, npred);
    let formula = assign_params(&formula, &ParamTemplate::default(), &Default::default())?;
    let r = config.value_range;
    let data = (0..steps * dim).map(|_| rng.gen_range(-r..=r)).collect();
    Ok(Instance {
        formula,
        specs,
        predicates,
        signal: Signal::new(steps, dim, data)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub count: usize,
    pub seed: u64,
    pub instance: InstanceConfig,
    /// Instances with `|exact robustness|` below this are not compared.
    pub band: f64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            count: 10_000,
            seed: 42,
            instance: InstanceConfig::default(),
            band: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub instance: InstanceRecord,
    pub dsr_value: f64,
    pub gmsr_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub trials: usize,
    pub compared: usize,
    pub skipped: usize,
    pub disagreements: Vec<Disagreement>,
}

enum FuzzOutcome {
    Skipped,
    Agree,
    Disagree(Box<Disagreement>),
}

/// Sign agreement of the generalized-mean semantics with exact robustness.
pub fn fuzz_sign_agreement(config: &FuzzConfig) -> Result<FuzzSummary> {
    fuzz_sign_agreement_with(config, &crate::robustness::GeneralizedMean)
}

/// Sign agreement of arbitrary key functions (given generalized-mean
/// parameters on every node) with exact robustness.
pub fn fuzz_sign_agreement_with(config: &FuzzConfig, keys: &dyn KeyFunctions) -> Result<FuzzSummary> {
    let outcomes = par::map_indices(config.count, |i| -> Result<FuzzOutcome> {
        let seed = config.seed.wrapping_add(i as u64);
        let inst = random_instance(seed, &config.instance)?;
        let rho = eval(&inst.formula, &inst.predicates, &inst.signal, 1, Semantics::Dsr)?;
        if rho.abs() < config.band {
            return Ok(FuzzOutcome::Skipped);
        }
        let gamma = eval_with(&inst.formula, &inst.predicates, &inst.signal, 1, keys)?;
        if gamma.signum() == rho.signum() && gamma != 0.0 {
            Ok(FuzzOutcome::Agree)
        } else {
            Ok(FuzzOutcome::Disagree(Box::new(Disagreement {
                instance: inst.record(seed),
                dsr_value: rho,
                gmsr_value: gamma,
            })))
        }
    });
    let mut summary = FuzzSummary {
        trials: config.count,
        compared: 0,
        skipped: 0,
        disagreements: Vec::new(),
    };
    for o in outcomes {
        match o? {
            FuzzOutcome::Skipped => summary.skipped += 1,
            FuzzOutcome::Agree => summary.compared += 1,
            FuzzOutcome::Disagree(d) => {
                summary.compared += 1;
                summary.disagreements.push(*d);
            }
        }
    }
    Ok(summary)
}

/// Generalized-mean key functions with the sign of the conjunction flipped.
/// A deliberately broken semantics for checking that the sign-agreement
/// battery detects faults.
#[derive(Debug, Clone, Copy)]
pub struct SignFlippedAnd;

impl KeyFunctions for SignFlippedAnd {
    fn name(&self) -> &'static str {
        "dgmsr-sign-flipped-and"
    }

    fn conj(&self, y: &[f64], params: Option<KeyParams<'_>>, grad: Option<&mut [f64]>) -> f64 {
        match grad {
            Some(g) => {
                let v = GeneralizedMean.conj(y, params, Some(&mut *g));
                g.iter_mut().for_each(|d| *d = -*d);
                -v
            }
            None => -GeneralizedMean.conj(y, params, None),
        }
    }

    fn disj(&self, y: &[f64], params: Option<KeyParams<'_>>, grad: Option<&mut [f64]>) -> f64 {
        GeneralizedMean.disj(y, params, grad)
    }

    fn needs_params(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub semantics: Semantics,
    pub h: f64,
    pub tol: f64,
    /// Tolerance used when some visited value is within `near_zero` of 0,
    /// where the generalized-mean semantics is only once differentiable.
    pub relaxed_tol: f64,
    pub near_zero: f64,
    pub instance: InstanceConfig,
}

impl GradCheckConfig {
    pub fn new(semantics: Semantics, trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            semantics,
            h: DEFAULT_FD_STEP,
            tol: 1e-4,
            relaxed_tol: 1e-3,
            near_zero: 1e-3,
            instance: InstanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradFailure {
    pub instance: InstanceRecord,
    pub error: f64,
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSummary {
    pub trials: usize,
    /// Largest error over instances held to the strict tolerance.
    pub max_error: f64,
    /// Largest error over instances with a near-zero visited value.
    pub max_error_near_zero: f64,
    pub near_zero_trials: usize,
    pub failures: Vec<GradFailure>,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Analytic gradients against central differences on random instances.
pub fn grad_check(config: &GradCheckConfig) -> Result<GradCheckSummary> {
    let results = par::map_indices(config.trials, |i| -> Result<(bool, f64, Option<GradFailure>)> {
        let seed = config.seed.wrapping_add(i as u64);
        let inst = random_instance(seed, &config.instance)?;
        let out = grad_eval(&inst.formula, &inst.predicates, &inst.signal, 1, config.semantics)?;
        let near_zero = out.cache.iter().any(|&(_, v)| v.abs() < config.near_zero);
        let error = fd_check(&inst.formula, &inst.predicates, &inst.signal, 1, config.semantics, config.h)?;
        let allowed = if near_zero { config.relaxed_tol } else { config.tol };
        let failure = (!(error <= allowed)).then(|| GradFailure {
            instance: inst.record(seed),
            error,
            allowed,
        });
        Ok((near_zero, error, failure))
    });
    let mut summary = GradCheckSummary {
        trials: config.trials,
        max_error: 0.0,
        max_error_near_zero: 0.0,
        near_zero_trials: 0,
        failures: Vec::new(),
    };
    for r in results {
        let (near_zero, error, failure) = r?;
        if near_zero {
            summary.near_zero_trials += 1;
            summary.max_error_near_zero = summary.max_error_near_zero.max(error);
        } else {
            summary.max_error = summary.max_error.max(error);
        }
        summary.failures.extend(failure);
    }
    Ok(summary)
}
