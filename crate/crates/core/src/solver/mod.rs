//! Optimizers: value iteration for local constraints and Lagrangian
//! relaxation for coupling constraints, with a small LP oracle.

pub mod coupled;
pub mod local;
pub mod lp;

pub use coupled::{
    dual_value, solve_coupled, CoupledConfig, CoupledError, CoupledSolution, DualIterate, Multipliers, OuterRecord,
    PrimalCandidate, StepRule,
};
pub use local::{bellman_apply, iteration_budget, value_iterate, DpState, SolverConfig, SolverError, Sweep};
pub use lp::{lp_formulate, lp_solve, simplex_max, LpCap, LpError, LpProblem, LpRow, LpSolution, LpVar};
