//! Lagrangian relaxation of coupling constraints. The dual function is
//! evaluated by value iteration on penalized rewards and minimized by
//! projected subgradient steps. A small master LP over the occupation
//! measures met along the way yields primal candidates.

use thiserror::Error;

use super::local::{iteration_budget, solve_with_rewards, SolverConfig, SolverError};
use super::lp::{simplex_max, LpRow};
use crate::chain::{occupation, recover_mixture, stationary, ChainError, OccupationMeasure};
use crate::model::{
    build_transition, strategy_from_transition, LinkWeights, ModelError, PageControl, Strategy, TransitionMatrix,
    WebGraphInstance,
};
use crate::polytope::Relation;

/// Slack allowed on coupling rows before an iterate counts as infeasible.
pub const COUPLING_TOL: f64 = 1e-9;
const STATIONARY_TOL: f64 = 1e-13;
const LAMBDA_STALL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CoupledError {
    #[error("instance has no coupling constraints")]
    NoCoupling,
    #[error("multipliers must be nonnegative and match the coupling rows")]
    InvalidMultipliers,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no feasible strategy found; dual bound {}", .0.dual_bound)]
    NoFeasibleFound(Box<CoupledSolution>),
    #[error("gap {:?} above tolerance after {} outer iterations", .0.gap, .0.outer_iterations)]
    MaxOuterExceeded(Box<CoupledSolution>),
}

/// Nonnegative multipliers, one per coupling row.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers(Vec<f64>);

impl Multipliers {
    pub fn new(values: Vec<f64>) -> Result<Self, CoupledError> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CoupledError::InvalidMultipliers);
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `r - sum_k lambda_k d^k`.
    pub fn penalized(&self, instance: &WebGraphInstance) -> LinkWeights {
        instance
            .coupling()
            .iter()
            .zip(&self.0)
            .filter(|(_, &l)| l != 0.0)
            .fold(instance.rewards().clone(), |acc, (c, &l)| acc.add_scaled(-l, &c.cost))
    }
}

/// One evaluation of the dual function.
#[derive(Debug, Clone)]
pub struct DualIterate {
    pub lambda: Multipliers,
    pub theta: f64,
    /// Occupation measure of the maximizing strategy.
    pub rho: OccupationMeasure,
    pub strategy: Strategy,
    /// `g_k = <d^k, rho> - V^k`.
    pub g: Vec<f64>,
    pub feasible: bool,
    /// `<r, rho>`.
    pub primal_value: f64,
    /// Value iteration sweeps.
    pub iterations: usize,
}

impl DualIterate {
    pub fn pi(&self) -> &[f64] {
        match &self.rho {
            OccupationMeasure::Factored { pi, .. } => pi,
            OccupationMeasure::Explicit { .. } => unreachable!("dual iterates are factored"),
        }
    }

    fn transition(&self) -> &TransitionMatrix {
        match &self.rho {
            OccupationMeasure::Factored { transition, .. } => transition,
            OccupationMeasure::Explicit { .. } => unreachable!("dual iterates are factored"),
        }
    }
}

/// Evaluates `theta(lambda) = max_rho <r, rho> - sum_k lambda_k (<d^k, rho> - V^k)`.
pub fn dual_value(
    instance: &WebGraphInstance,
    lambda: &Multipliers,
    config: &SolverConfig,
) -> Result<DualIterate, CoupledError> {
    let coupling = instance.coupling();
    if lambda.as_slice().len() != coupling.len() {
        return Err(CoupledError::InvalidMultipliers);
    }
    let (state, strategy) = solve_with_rewards(instance, &lambda.penalized(instance), config)?;
    let p = build_transition(instance, &strategy)?;
    let a = instance.damping();
    let pi = stationary(&p, STATIONARY_TOL, iteration_budget(a, STATIONARY_TOL) + 200)?;
    let rho = occupation(&pi, &p);
    let g: Vec<f64> = coupling.iter().map(|c| rho.inner(&c.cost) - c.bound).collect();
    let offset: f64 = coupling.iter().zip(lambda.as_slice()).map(|(c, l)| l * c.bound).sum();
    Ok(DualIterate {
        lambda: lambda.clone(),
        theta: state.psi + offset,
        feasible: g.iter().all(|&v| v <= COUPLING_TOL),
        primal_value: rho.inner(instance.rewards()),
        g,
        rho,
        strategy,
        iterations: state.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `s_t = s0 / (1 + t)`.
    Harmonic { s0: f64 },
    /// `s_t = (theta_t - target) / |g|^2`, the target being the best
    /// known primal value.
    Polyak,
}

#[derive(Debug, Clone)]
pub struct CoupledConfig {
    /// Relative gap at which the outer loop stops.
    pub tol: f64,
    pub max_outer: usize,
    pub step_rule: StepRule,
    pub inner: SolverConfig,
}

impl Default for CoupledConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_outer: 200,
            step_rule: StepRule::Polyak,
            inner: SolverConfig {
                tol: 1e-10,
                ..SolverConfig::default()
            },
        }
    }
}

/// Summary of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub lambda: Vec<f64>,
    pub theta: f64,
    pub g: Vec<f64>,
    pub primal_value: f64,
    pub feasible: bool,
}

/// Convex combination of the visited occupation measures that maximizes
/// the utility under the coupling rows.
#[derive(Debug, Clone)]
pub struct PrimalCandidate {
    pub value: f64,
    /// `<d^k, rho>` for every coupling row.
    pub coupling: Vec<f64>,
    /// `(outer iteration, weight)` pairs with positive weight.
    pub weights: Vec<(usize, f64)>,
    pub pi: Vec<f64>,
    pub transition: TransitionMatrix,
    /// Randomized strategy inducing the mixture.
    pub strategy: Strategy,
}

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    /// Smallest dual value seen, an upper bound on the constrained optimum.
    pub dual_bound: f64,
    pub best_multipliers: Multipliers,
    /// Best feasible iterate, a strategy of the instance's own kind.
    pub best_feasible: Option<(Strategy, f64)>,
    pub candidate: Option<PrimalCandidate>,
    /// Best primal value used for the gap.
    pub best_primal: Option<f64>,
    /// `(dual_bound - best_primal) / max(|dual_bound|, 1e-12)`.
    pub gap: Option<f64>,
    pub outer_iterations: usize,
    pub history: Vec<OuterRecord>,
}

fn relative_gap(dual: f64, primal: f64) -> f64 {
    (dual - primal) / dual.abs().max(1e-12)
}

/// Minimizes the dual function over `lambda >= 0` by projected subgradient.
///
/// The mixture candidate counts toward the gap only when the instance has
/// no discrete pages, since a mixture of discrete strategies is not itself
/// a discrete strategy.
pub fn solve_coupled(instance: &WebGraphInstance, config: &CoupledConfig) -> Result<CoupledSolution, CoupledError> {
    let k = instance.coupling().len();
    if k == 0 {
        return Err(CoupledError::NoCoupling);
    }
    let mixed_counts = (0..instance.num_pages()).all(|i| instance.control(i) != PageControl::Discrete);
    let mut lambda = Multipliers::zeros(k);
    let mut columns: Vec<(usize, DualIterate)> = Vec::new();
    let mut history = Vec::new();
    let mut sol = CoupledSolution {
        dual_bound: f64::INFINITY,
        best_multipliers: lambda.clone(),
        best_feasible: None,
        candidate: None,
        best_primal: None,
        gap: None,
        outer_iterations: 0,
        history: Vec::new(),
    };
    let mut converged = false;
    for t in 0..config.max_outer {
        let it = dual_value(instance, &lambda, &config.inner)?;
        sol.outer_iterations = t + 1;
        history.push(OuterRecord {
            lambda: lambda.as_slice().to_vec(),
            theta: it.theta,
            g: it.g.clone(),
            primal_value: it.primal_value,
            feasible: it.feasible,
        });
        if it.theta < sol.dual_bound {
            sol.dual_bound = it.theta;
            sol.best_multipliers = lambda.clone();
        }
        if it.feasible && sol.best_feasible.as_ref().is_none_or(|b| it.primal_value > b.1) {
            sol.best_feasible = Some((it.strategy.clone(), it.primal_value));
        }
        let (theta, g) = (it.theta, it.g.clone());
        if !columns.iter().any(|c| c.1.strategy == it.strategy) {
            columns.push((t, it));
            if let Some(c) = master(instance, &columns)? {
                sol.candidate = Some(c);
            }
        }
        let relaxed = sol.candidate.as_ref().map(|c| c.value);
        let feasible = sol.best_feasible.as_ref().map(|b| b.1);
        sol.best_primal = if mixed_counts {
            max_opt(feasible, relaxed)
        } else {
            feasible
        };
        sol.gap = sol.best_primal.map(|p| relative_gap(sol.dual_bound, p));
        // the mixture certifies the dual minimum even when it does not count
        // toward the gap
        let dual_solved = relaxed.is_some_and(|v| relative_gap(sol.dual_bound, v) <= config.tol);
        if dual_solved || sol.gap.is_some_and(|gap| gap <= config.tol) {
            converged = true;
            break;
        }
        let norm2: f64 = g.iter().map(|v| v * v).sum();
        if norm2 == 0.0 {
            converged = true;
            break;
        }
        // any primal value lower-bounds the dual minimum
        let target = max_opt(feasible, relaxed);
        let step = match (config.step_rule, target) {
            (StepRule::Harmonic { s0 }, _) => s0 / (1.0 + t as f64),
            (StepRule::Polyak, Some(target)) => (theta - target).max(0.0) / norm2,
            // without a target, fall back to normalized diminishing steps
            (StepRule::Polyak, None) => theta.abs().max(1.0) / ((1.0 + t as f64) * norm2),
        };
        let next: Vec<f64> = lambda
            .as_slice()
            .iter()
            .zip(&g)
            .map(|(l, gk)| (l + step * gk).max(0.0))
            .collect();
        let moved = next
            .iter()
            .zip(lambda.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        lambda = Multipliers(next);
        if moved <= LAMBDA_STALL {
            converged = true;
            break;
        }
    }
    sol.history = history;
    if sol.best_primal.is_none() {
        return Err(CoupledError::NoFeasibleFound(Box::new(sol)));
    }
    if !converged {
        return Err(CoupledError::MaxOuterExceeded(Box::new(sol)));
    }
    Ok(sol)
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Best convex combination of the collected measures under the coupling
/// rows. Columns are tagged with their outer iteration.
fn master(
    instance: &WebGraphInstance,
    columns: &[(usize, DualIterate)],
) -> Result<Option<PrimalCandidate>, CoupledError> {
    let coupling = instance.coupling();
    let m = columns.len();
    let value: Vec<f64> = columns.iter().map(|c| c.1.primal_value).collect();
    let cost = |k: usize, c: &(usize, DualIterate)| c.1.g[k] + coupling[k].bound;
    let mut rows: Vec<LpRow> = (0..coupling.len())
        .map(|k| LpRow {
            coeffs: columns.iter().enumerate().map(|(t, c)| (t, cost(k, c))).collect(),
            relation: Relation::Le,
            rhs: coupling[k].bound,
        })
        .collect();
    rows.push(LpRow {
        coeffs: (0..m).map(|t| (t, 1.0)).collect(),
        relation: Relation::Eq,
        rhs: 1.0,
    });
    let Ok(mu) = simplex_max(&value, &rows, 1e-12) else {
        return Ok(None);
    };
    let total: f64 = mu.iter().sum();
    let parts: Vec<(usize, f64)> = mu.iter().map(|w| w / total).enumerate().filter(|e| e.1 > 0.0).collect();
    let mixture: Vec<(f64, &[f64], &TransitionMatrix)> = parts
        .iter()
        .map(|&(t, w)| (w, columns[t].1.pi(), columns[t].1.transition()))
        .collect();
    let (pi, transition) = recover_mixture(&mixture)?;
    let strategy = strategy_from_transition(instance, &transition);
    Ok(Some(PrimalCandidate {
        value: parts.iter().map(|&(t, w)| w * value[t]).sum(),
        coupling: (0..coupling.len())
            .map(|k| parts.iter().map(|&(t, w)| w * cost(k, &columns[t])).sum())
            .collect(),
        weights: parts.iter().map(|&(t, w)| (columns[t].0, w)).collect(),
        pi: pi.pi,
        transition,
        strategy,
    }))
}
