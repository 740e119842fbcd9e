use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use stl_gmsr::grad::grad_eval;
use stl_gmsr::harness::{
    fuzz_sign_agreement_with, grad_check as run_grad_check, FuzzConfig, GradCheckConfig, InstanceConfig, PredicateSpec,
    SignFlippedAnd,
};
use stl_gmsr::problems::{
    locality_config, max_masked_weight, moves_only_side, operator_demo, quadrotor_config, solve_locality,
    solve_quadrotor, AscentTrace, DemoKind, ExperimentVerdict, LocalityParams, QuadrotorParams, Solved, DEMO_ITERATIONS,
    DEMO_STEP, MIXED_INIT,
};
use stl_gmsr::robustness::{GeneralizedMean, KeyFunctions};
use stl_gmsr::scp::ScpConfig;
use stl_gmsr::stl::{assign_params, formula_from_json, parse_formula, NodeParams};
use stl_gmsr::{check_sat, Formula, PredicateTable, Semantics};

use crate::io::{outdir, print_line, read_signal, write_json, write_rows, write_trajectory};
use crate::{
    DemoArgs, DemoName, EvalArgs, Failure, Fault, FuzzArgs, GradCheckArgs, EXIT_OK, EXIT_SOLVER, EXIT_VIOLATION,
};

/// Largest gradient weight a masked softmin coordinate may carry.
const MASKED_WEIGHT_LIMIT: f64 = 1e-6;
/// Tolerance on path constraints, boundary conditions and defects.
const CONSTRAINT_TOL: f64 = 1e-6;

pub fn eval(args: EvalArgs) -> Result<u8, Failure> {
    let signal = read_signal(&args.signal)?;
    let mut table = PredicateTable::components(signal.dim());
    if let Some(path) = &args.predicates {
        let text = read_text(path)?;
        let specs: BTreeMap<String, PredicateSpec> =
            serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        for (name, spec) in specs {
            if table.id(&name).is_some() {
                return Err(Failure::usage(format!("predicate `{name}` is already defined")));
            }
            table.insert(spec.to_def(name));
        }
    }
    let formula = load_formula(&args.formula, &table, &args.smoothing.template())?;
    let semantics = args.smoothing.semantics(&args.semantics);
    let verdict = check_sat(&formula, &table, &signal, args.k, semantics)?;
    let mut line = json!({
        "semantics": semantics.name(),
        "value": verdict.value,
        "satisfied": verdict.satisfied,
    });
    if args.gradient {
        let out = grad_eval(&formula, &table, &signal, args.k, semantics)?;
        let rows: Vec<&[f64]> = (1..=out.steps).map(|k| out.row(k)).collect();
        line["gradient"] = json!(rows);
    }
    print_line(&line);
    Ok(if args.assert_sat && !verdict.satisfied {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    })
}

/// Reads the formula from a file when `source` names one, then parses it as
/// JSON if it starts with `{`, as text otherwise. Operators without explicit
/// parameters get the template.
fn load_formula(
    source: &str,
    table: &PredicateTable,
    template: &stl_gmsr::ParamTemplate,
) -> Result<Formula, Failure> {
    let path = Path::new(source);
    let text = if path.is_file() { read_text(path)? } else { source.to_string() };
    let text = text.trim();
    let formula = if text.starts_with('{') {
        formula_from_json(text, table)?
    } else {
        let names: HashMap<String, usize> = table.names();
        parse_formula(text, &names)?
    };
    let explicit: BTreeMap<usize, NodeParams> = formula
        .nodes()
        .into_iter()
        .filter_map(|f| f.params().map(|p| (f.id(), p.clone())))
        .collect();
    Ok(assign_params(&formula, template, &explicit)?)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

pub fn fuzz(args: FuzzArgs) -> Result<u8, Failure> {
    if args.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    if args.max_depth == 0 || args.max_steps == 0 || args.max_dim == 0 {
        return Err(Failure::usage("--max-depth, --max-steps and --max-dim must be positive"));
    }
    let config = FuzzConfig {
        count: args.count,
        seed: args.seed,
        instance: InstanceConfig {
            max_depth: args.max_depth,
            max_steps: args.max_steps,
            max_dim: args.max_dim,
            ..InstanceConfig::default()
        },
        band: args.band,
    };
    let keys: &dyn KeyFunctions = match args.inject_fault {
        None => &GeneralizedMean,
        Some(Fault::SignFlippedAnd) => &SignFlippedAnd,
    };
    let summary = fuzz_sign_agreement_with(&config, keys)?;
    let mut files = Vec::new();
    if !summary.disagreements.is_empty() {
        let dir = outdir(args.outdir)?;
        for d in &summary.disagreements {
            let path = dir.join(format!("fuzz_counterexample_{}.json", d.instance.seed));
            write_json(&path, d)?;
            files.push(path);
        }
    }
    print_line(&json!({
        "semantics": keys.name(),
        "trials": summary.trials,
        "compared": summary.compared,
        "skipped": summary.skipped,
        "disagreements": summary.disagreements.len(),
        "counterexamples": files,
    }));
    Ok(if summary.disagreements.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

pub fn grad_check(args: GradCheckArgs) -> Result<u8, Failure> {
    if args.trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    if !(args.h > 0.0) {
        return Err(Failure::usage("--h must be positive"));
    }
    let semantics = if args.dssr {
        Semantics::Dssr { kappa: args.kappa }
    } else {
        Semantics::Dgmsr
    };
    let config = GradCheckConfig {
        h: args.h,
        tol: args.tol,
        relaxed_tol: args.relaxed_tol,
        ..GradCheckConfig::new(semantics, args.trials, args.seed)
    };
    let summary = run_grad_check(&config)?;
    print_line(&json!({
        "semantics": semantics.name(),
        "trials": summary.trials,
        "h": config.h,
        "max_error": summary.max_error,
        "max_error_near_zero": summary.max_error_near_zero,
        "near_zero_trials": summary.near_zero_trials,
        "failures": summary.failures.len(),
        "passed": summary.passed(),
    }));
    Ok(if summary.passed() { EXIT_OK } else { EXIT_VIOLATION })
}

pub fn demo(args: DemoArgs) -> Result<u8, Failure> {
    let dir = outdir(args.outdir.clone())?;
    match args.name {
        DemoName::Operators => demo_operators(&dir, args.kappa),
        DemoName::Locality => {
            let semantics = if args.semantics.dsr {
                return Err(Failure::usage("the locality demo needs a smooth semantics (--gmsr or --dssr)"));
            } else if args.semantics.dssr {
                Semantics::Dssr { kappa: args.kappa }
            } else {
                Semantics::Dgmsr
            };
            let config = with_max_iter(locality_config(), args.max_iter);
            let solved = solve_locality(&LocalityParams::default(), semantics, &config)?;
            let verdict = solved.check.verdict(CONSTRAINT_TOL);
            // The log-sum-exp run is expected to stall outside the circle.
            let expected = semantics == Semantics::Dgmsr;
            let matches = verdict.satisfied == expected
                && (expected || (solved.check.objective_value < 0.0 && solved.check.nodes_inside.is_empty()));
            let extra = json!({
                "objective_value": solved.check.objective_value,
                "nodes_inside": solved.check.nodes_inside,
            });
            finish_experiment(&dir, &format!("locality_{}", semantics.name()), &solved, verdict, expected, matches, extra)
        }
        DemoName::Quadrotor => {
            if args.semantics.dsr || args.semantics.dssr {
                return Err(Failure::usage("the quadrotor demo uses the generalized-mean semantics"));
            }
            let params = QuadrotorParams::default();
            let config = with_max_iter(quadrotor_config(), args.max_iter);
            let solved = solve_quadrotor(&params, &config)?;
            let verdict = solved.check.verdict(CONSTRAINT_TOL);
            let matches = verdict.satisfied && verdict.constraints_ok;
            let extra = json!({
                "window_start": solved.check.window_start,
                "path_violation": solved.check.path_violation,
                "boundary_error": solved.check.boundary_error,
            });
            finish_experiment(&dir, "quadrotor", &solved, verdict, true, matches, extra)
        }
    }
}

fn with_max_iter(mut config: ScpConfig, max_iter: Option<usize>) -> ScpConfig {
    if let Some(n) = max_iter {
        config.max_iter = n;
    }
    config
}

/// Writes `<stem>_trajectory.csv`, `<stem>_history.json` and
/// `<stem>_verdict.json`, prints a summary line and picks the exit code.
fn finish_experiment<C>(
    dir: &Path,
    stem: &str,
    solved: &Solved<C>,
    verdict: ExperimentVerdict,
    expected: bool,
    matches: bool,
    extra: serde_json::Value,
) -> Result<u8, Failure> {
    let files: Vec<PathBuf> = ["trajectory.csv", "history.json", "verdict.json"]
        .iter()
        .map(|s| dir.join(format!("{stem}_{s}")))
        .collect();
    write_trajectory(&files[0], &solved.problem.times(), &solved.trajectory)?;
    write_json(&files[1], &solved.report)?;
    write_json(&files[2], &verdict)?;
    let mut line = json!({
        "experiment": stem,
        "converged": solved.report.converged(),
        "iterations": solved.report.iterations,
        "verdict": verdict,
        "expected_satisfied": expected,
        "matches_expected": matches,
        "files": files,
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (line.as_object_mut(), extra) {
        obj.extend(more);
    }
    print_line(&line);
    Ok(if !solved.report.converged() {
        eprintln!("stlgmsr: solver stopped after {} iterations without converging", solved.report.iterations);
        EXIT_SOLVER
    } else if matches {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

#[derive(Serialize)]
struct OperatorVerdict {
    /// Largest log-sum-exp conjunction weight on a non-minimal coordinate
    /// while the two smallest values are at least one apart.
    dssr_masked_weight: Option<f64>,
    dssr_one_coordinate_per_phase: bool,
    dgmsr_conjunction_moves_negative_only: bool,
    dgmsr_disjunction_moves_positive_only: bool,
    passed: bool,
}

fn demo_operators(dir: &Path, kappa: f64) -> Result<u8, Failure> {
    if !(kappa > 0.0) {
        return Err(Failure::usage("--kappa must be positive"));
    }
    let mut traces = BTreeMap::new();
    for semantics in [Semantics::Dssr { kappa }, Semantics::Dgmsr] {
        for kind in [DemoKind::Conjunction, DemoKind::Disjunction] {
            let trace = operator_demo(kind, &MIXED_INIT, semantics, DEMO_STEP, DEMO_ITERATIONS)?;
            let name = format!("operators_{}_{}", kind_name(kind), semantics.name());
            write_trace(&dir.join(format!("{name}.csv")), &trace)?;
            traces.insert(name, trace);
        }
    }
    let masked = max_masked_weight(&traces["operators_conjunction_dssr"], 1.0);
    let verdict = OperatorVerdict {
        dssr_masked_weight: masked,
        dssr_one_coordinate_per_phase: masked.is_some_and(|w| w < MASKED_WEIGHT_LIMIT),
        dgmsr_conjunction_moves_negative_only: moves_only_side(&traces["operators_conjunction_dgmsr"], true),
        dgmsr_disjunction_moves_positive_only: moves_only_side(&traces["operators_disjunction_dgmsr"], false),
        passed: false,
    };
    let verdict = OperatorVerdict {
        passed: verdict.dssr_one_coordinate_per_phase
            && verdict.dgmsr_conjunction_moves_negative_only
            && verdict.dgmsr_disjunction_moves_positive_only,
        ..verdict
    };
    let path = dir.join("operators_verdict.json");
    write_json(&path, &verdict)?;
    print_line(&json!({ "experiment": "operators", "verdict": verdict, "files": traces.keys().map(|n| dir.join(format!("{n}.csv"))).chain([path]).collect::<Vec<_>>() }));
    Ok(if verdict.passed { EXIT_OK } else { EXIT_VIOLATION })
}

fn kind_name(kind: DemoKind) -> &'static str {
    match kind {
        DemoKind::Conjunction => "conjunction",
        DemoKind::Disjunction => "disjunction",
    }
}

/// One row per iterate: `iter, robustness, y1..yn, dy1..dyn` (the gradient
/// is empty on the final row, which no step follows).
fn write_trace(path: &Path, trace: &AscentTrace) -> Result<(), Failure> {
    let n = trace.values[0].len();
    let header: Vec<String> = ["iter".to_string(), "robustness".to_string()]
        .into_iter()
        .chain((1..=n).map(|i| format!("y{i}")))
        .chain((1..=n).map(|i| format!("dy{i}")))
        .collect();
    let rows: Vec<Vec<String>> = trace
        .values
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let dy = match trace.weights.get(i) {
                Some(dy) => dy.iter().map(f64::to_string).collect(),
                None => vec![String::new(); n],
            };
            [vec![i.to_string(), trace.robustness[i].to_string()], y.iter().map(f64::to_string).collect(), dy].concat()
        })
        .collect();
    write_rows(path, &header, &rows)
}
