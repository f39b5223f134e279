//! One function per subcommand. Each returns the report text and the exit
//! code, or an error mapped to its exit code by the caller.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde_json::{json, Value};

use pro_core::analysis::{continuous_optimality_check, master_ordering, AnalysisError};
use pro_core::chain::{occupation, stationary, utility, ChainError};
use pro_core::model::io::{instance_from_doc, load_strategy, strategy_to_json, InstanceDoc};
use pro_core::model::{build_transition, strategy_from_transition, Strategy, WebGraphInstance};
use pro_core::oracle::{brute_force_optimum, exact_utility, EnumerationBudget, OracleError};
use pro_core::solver::{
    iteration_budget, solve_coupled, value_iterate, CoupledConfig, CoupledError, CoupledSolution, SolverConfig,
    SolverError, StepRule, Sweep,
};

use crate::report::{CliError, Digest, RunReport, Timer, EXIT_QUALIFIED};

type Outcome = Result<(String, u8), CliError>;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Loads an instance and tells whether it lists rewards.
fn load(path: &Path) -> Result<(WebGraphInstance, bool), CliError> {
    let doc: InstanceDoc = serde_json::from_reader(open(path)?).map_err(|e| {
        CliError::Input(format!(
            "{}: parse error at line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let has_rewards = doc.rewards.is_some();
    let instance = instance_from_doc(doc).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((instance, has_rewards))
}

fn load_strategy_file(path: &Path, instance: &WebGraphInstance) -> Result<Strategy, CliError> {
    load_strategy(open(path)?, instance).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_strategy(path: &Path, strategy: &Strategy, instance: &WebGraphInstance) -> Result<(), CliError> {
    std::fs::write(path, strategy_to_json(strategy, instance) + "\n")
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn chain_error(e: ChainError) -> CliError {
    match e {
        ChainError::MaxIterExceeded { .. } => CliError::Resource(e.to_string()),
        ChainError::ZeroRow { .. } => CliError::Input(e.to_string()),
    }
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::CouplingPresent => {
            CliError::Qualified("instance has coupling constraints; use optimize-coupled".into())
        }
        SolverError::MaxIterExceeded(_) => CliError::Resource(e.to_string()),
    }
}

fn finish(
    command: &'static str,
    instance: &WebGraphInstance,
    result: Value,
    iterations: Option<usize>,
    tolerance_achieved: Option<f64>,
    timer: &Timer,
    code: u8,
) -> Outcome {
    let report = RunReport {
        command,
        instance: Digest::of(instance),
        result,
        iterations,
        tolerance_achieved,
        wall_time_ms: timer.elapsed_ms(),
    };
    Ok((report.to_json(), code))
}

pub fn pagerank(path: &Path, strategy: Option<&Path>, tol: f64, max_iter: usize, det: bool) -> Outcome {
    let timer = Timer::start(det);
    let (instance, has_rewards) = load(path)?;
    let strategy = match strategy {
        Some(s) => load_strategy_file(s, &instance)?,
        None => Strategy::default_for(&instance),
    };
    if tol.is_nan() || tol <= 0.0 {
        return Err(CliError::Input("tolerance must be positive".into()));
    }
    let p = build_transition(&instance, &strategy).map_err(|e| CliError::Input(e.to_string()))?;
    let pi = stationary(&p, tol, max_iter).map_err(chain_error)?;
    let rho = occupation(&pi, &p);
    let mut result = json!({ "pi": pi.pi, "residual": pi.residual });
    if has_rewards {
        result["utility"] = json!(utility(&rho, instance.rewards()));
    }
    finish(
        "pagerank",
        &instance,
        result,
        Some(pi.iterations),
        Some(pi.residual),
        &timer,
        0,
    )
}

pub fn optimize(
    path: &Path,
    continuous: Option<bool>,
    tol: f64,
    max_iter: Option<usize>,
    sweep: Sweep,
    out: Option<&Path>,
    det: bool,
) -> Outcome {
    let timer = Timer::start(det);
    let (instance, _) = load(path)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(CliError::Input("tolerance must be positive".into()));
    }
    let continuous = continuous.unwrap_or(instance.num_skeleton() > 0);
    if !continuous && instance.num_skeleton() > 0 {
        return Err(CliError::Input(
            "skeleton pages need continuous rows; use --mode continuous".into(),
        ));
    }
    let config = SolverConfig { tol, max_iter, sweep };
    let (state, strategy) = value_iterate(&instance, &config).map_err(solver_error)?;
    let strategy = if continuous {
        let p = build_transition(&instance, &strategy).map_err(|e| CliError::Input(e.to_string()))?;
        strategy_from_transition(&instance, &p)
    } else {
        strategy
    };
    if let Some(out) = out {
        write_strategy(out, &strategy, &instance)?;
    }
    let result = json!({
        "value": state.psi,
        "bias": state.w,
        "iterations": state.iterations,
        "iteration_budget": iteration_budget(instance.damping(), tol),
        "residual": state.residual,
        "strategy_file": out.map(|p| p.display().to_string()),
    });
    finish(
        "optimize",
        &instance,
        result,
        Some(state.iterations),
        Some(state.residual),
        &timer,
        0,
    )
}

fn coupled_result(sol: &CoupledSolution, status: &str) -> Value {
    json!({
        "status": status,
        "dual_bound": sol.dual_bound,
        "best_feasible_value": sol.best_primal,
        "best_iterate_value": sol.best_feasible.as_ref().map(|b| b.1),
        "gap": sol.gap,
        "multipliers": sol.best_multipliers.as_slice(),
        "outer_iterations": sol.outer_iterations,
        "candidate": sol.candidate.as_ref().map(|c| json!({
            "value": c.value,
            "coupling": c.coupling,
            "pi": c.pi,
        })),
    })
}

/// Strategy attaining the reported primal value.
fn best_strategy(sol: &CoupledSolution) -> Option<&Strategy> {
    let iterate = sol.best_feasible.as_ref();
    match (&sol.candidate, sol.best_primal) {
        (Some(c), Some(v)) if iterate.is_none_or(|b| b.1 < v) && c.value == v => Some(&c.strategy),
        _ => iterate.map(|b| &b.0),
    }
}

pub fn optimize_coupled(
    path: &Path,
    max_outer: usize,
    step_rule: StepRule,
    tol: f64,
    inner_tol: f64,
    out: Option<&Path>,
    det: bool,
) -> Outcome {
    let timer = Timer::start(det);
    let (instance, _) = load(path)?;
    if instance.coupling().is_empty() {
        return Err(CliError::Input(
            "instance has no coupling constraints; use optimize".into(),
        ));
    }
    if inner_tol.is_nan() || inner_tol <= 0.0 {
        return Err(CliError::Input("tolerance must be positive".into()));
    }
    let config = CoupledConfig {
        tol,
        max_outer,
        step_rule,
        inner: SolverConfig {
            tol: inner_tol,
            ..SolverConfig::default()
        },
    };
    let (sol, status, code) = match solve_coupled(&instance, &config) {
        Ok(sol) => (sol, "converged", 0),
        Err(CoupledError::NoFeasibleFound(sol)) => (*sol, "no_feasible_found", EXIT_QUALIFIED),
        Err(CoupledError::MaxOuterExceeded(sol)) => (*sol, "max_outer_exceeded", 3),
        Err(CoupledError::Solver(e)) => return Err(solver_error(e)),
        Err(CoupledError::Chain(e)) => return Err(chain_error(e)),
        Err(e) => return Err(CliError::Input(e.to_string())),
    };
    if let (Some(out), Some(strategy)) = (out, best_strategy(&sol)) {
        write_strategy(out, strategy, &instance)?;
    }
    let result = coupled_result(&sol, status);
    finish(
        "optimize-coupled",
        &instance,
        result,
        Some(sol.outer_iterations),
        sol.gap,
        &timer,
        code,
    )
}

pub fn analyze(path: &Path, strategy: &Path, tol: f64, det: bool) -> Outcome {
    let timer = Timer::start(det);
    let (instance, _) = load(path)?;
    let strategy = load_strategy_file(strategy, &instance)?;
    let report = master_ordering(&instance, &strategy, tol).map_err(|e| match e {
        AnalysisError::Chain(c) => chain_error(c),
        other => CliError::Input(other.to_string()),
    })?;
    let p = build_transition(&instance, &strategy).map_err(|e| CliError::Input(e.to_string()))?;
    let check = continuous_optimality_check(&instance, &p, tol).map_err(|e| CliError::Input(e.to_string()))?;
    let code = if report.violations.is_empty() {
        0
    } else {
        EXIT_QUALIFIED
    };
    let mut result = serde_json::to_value(&report).expect("report serializes");
    result["defects"] = json!(check.defects);
    finish("analyze", &instance, result, None, Some(check.max_defect), &timer, code)
}

fn oracle_error(e: OracleError) -> CliError {
    match e {
        OracleError::BudgetExceeded { .. } | OracleError::TooLarge(_) => CliError::Resource(e.to_string()),
        OracleError::NoFeasibleStrategy => CliError::Qualified(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

/// Agreement required between enumeration and value iteration.
const MATCH_TOL: f64 = 1e-8;

pub fn verify(path: &Path, max_facultative: usize, det: bool) -> Outcome {
    let timer = Timer::start(det);
    let (instance, _) = load(path)?;
    let budget = EnumerationBudget::new(max_facultative).map_err(oracle_error)?;
    let bf = brute_force_optimum(&instance, budget).map_err(oracle_error)?;
    let activated: Vec<Value> = (0..instance.num_pages())
        .filter_map(|i| {
            let a = bf.strategy.activated(i)?;
            (!a.is_empty()).then(|| json!({ "page": i, "activated": a }))
        })
        .collect();
    let mut result = json!({
        "brute_force_value": bf.value,
        "strategies_enumerated": bf.values.len(),
        "optimal_links": activated,
    });
    if !instance.coupling().is_empty() {
        // value iteration ignores coupling rows, so there is nothing to match
        result["value_iterate"] = Value::Null;
        result["matched"] = Value::Null;
        return finish("verify", &instance, result, None, None, &timer, 0);
    }
    let config = SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    };
    let (state, strategy) = value_iterate(&instance, &config).map_err(solver_error)?;
    let exact = exact_utility(&instance, &strategy).map_err(oracle_error)?;
    let diff = (bf.value - state.psi).abs().max((bf.value - exact).abs());
    let matched = diff <= MATCH_TOL;
    result["value_iterate"] = json!(state.psi);
    result["value_iterate_exact_utility"] = json!(exact);
    result["difference"] = json!(diff);
    result["matched"] = json!(matched);
    let code = if matched { 0 } else { EXIT_QUALIFIED };
    finish(
        "verify",
        &instance,
        result,
        Some(state.iterations),
        Some(diff),
        &timer,
        code,
    )
}
