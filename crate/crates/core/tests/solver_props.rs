//! Property tests for value iteration, the Lagrangian dual and the
//! structure of optimal strategies.

use proptest::prelude::*;
use rand::prelude::*;

use pro_core::analysis::{continuous_optimality_check, master_ordering, TIE_TOL};
use pro_core::chain::{occupation, stationary, utility};
use pro_core::model::{build_transition, CouplingConstraint, LinkWeights, Strategy, WebGraphInstance};
use pro_core::oracle::{brute_force_optimum, exact_evaluation, EnumerationBudget};
use pro_core::solver::{
    bellman_apply, dual_value, lp_formulate, lp_solve, solve_coupled, value_iterate, CoupledConfig, CoupledError,
    LpCap, Multipliers, SolverConfig, Sweep,
};
use pro_core::synth::{random_discrete, random_skeleton, with_random_coupling, DiscreteShape};

fn discrete(rng: &mut StdRng, max_pages: usize, max_facultative: usize, per_page_rewards: bool) -> WebGraphInstance {
    let pages = rng.random_range(1..=max_pages);
    let facultative = rng.random_range(0..=max_facultative.min(pages * pages));
    random_discrete(
        rng,
        DiscreteShape {
            pages,
            facultative,
            obligatory_prob: 0.3,
            per_page_rewards,
        },
    )
}

fn instance(seed: u64) -> WebGraphInstance {
    let mut rng = StdRng::seed_from_u64(seed);
    if rng.random_bool(0.5) {
        let pages = rng.random_range(1..=10);
        random_skeleton(&mut rng, pages)
    } else {
        let per_page = rng.random_bool(0.5);
        discrete(&mut rng, 10, 40, per_page)
    }
}

fn config(tol: f64, sweep: Sweep) -> SolverConfig {
    SolverConfig {
        tol,
        max_iter: Some(1_000_000),
        sweep,
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn chain_utility(inst: &WebGraphInstance, s: &Strategy, rewards: &LinkWeights) -> f64 {
    let p = build_transition(inst, s).unwrap();
    utility(&occupation(&stationary(&p, 1e-14, 1_000_000).unwrap(), &p), rewards)
}

fn coupled_instance(seed: u64) -> WebGraphInstance {
    let mut rng = StdRng::seed_from_u64(seed);
    let base = if rng.random_bool(0.5) {
        let pages = rng.random_range(2..=8);
        random_skeleton(&mut rng, pages)
    } else {
        discrete(&mut rng, 8, 20, false)
    };
    with_random_coupling(&mut rng, &base)
}

const TOL: f64 = 1e-9;

/// Default outer settings; the inner cap leaves room for damping near 0.95,
/// where the default sweep cap is below what the stopping rule needs.
fn coupled_config() -> CoupledConfig {
    CoupledConfig {
        inner: config(1e-10, Sweep::Jacobi),
        ..CoupledConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn bellman_operator_contracts(seed in any::<u64>(), scale in 0.1f64..100.0) {
        let inst = instance(seed);
        let mut rng = StdRng::seed_from_u64(seed.rotate_left(17));
        let n = inst.num_pages();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let w2: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let lhs = sup_diff(&bellman_apply(&inst, &w), &bellman_apply(&inst, &w2));
        let rhs = inst.damping() * sup_diff(&w, &w2);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn fixed_point_and_value(seed in any::<u64>()) {
        let inst = instance(seed);
        let (state, strategy) = value_iterate(&inst, &config(TOL, Sweep::Jacobi)).unwrap();
        // w_i + psi = max P_i (r_i + w) is T(w) = w for the damped operator
        prop_assert!(sup_diff(&bellman_apply(&inst, &state.w), &state.w) <= 10.0 * TOL);
        let zw: f64 = inst.teleport().zapping().iter().zip(&state.w).map(|(z, w)| z * w).sum();
        prop_assert_eq!(state.psi, (1.0 - inst.damping()) * zw);
        let u = chain_utility(&inst, &strategy, inst.rewards());
        prop_assert!((u - state.psi).abs() <= 10.0 * TOL, "{u} vs {}", state.psi);
    }

    #[test]
    fn sweeps_agree(seed in any::<u64>()) {
        let inst = instance(seed);
        let (j, _) = value_iterate(&inst, &config(TOL, Sweep::Jacobi)).unwrap();
        let (g, _) = value_iterate(&inst, &config(TOL, Sweep::GaussSeidel)).unwrap();
        prop_assert!(sup_diff(&j.w, &g.w) <= 10.0 * TOL);
    }

    #[test]
    fn reward_scaling(seed in any::<u64>(), c in 0.1f64..10.0) {
        let inst = instance(seed);
        let (base, _) = value_iterate(&inst, &config(TOL, Sweep::Jacobi)).unwrap();
        let scaled = inst.with_rewards(inst.rewards().scaled(c));
        let (state, strategy) = value_iterate(&scaled, &config(TOL, Sweep::Jacobi)).unwrap();
        prop_assert!((state.psi - c * base.psi).abs() <= 10.0 * TOL * c.max(1.0));
        // the optimal strategy does not depend on the reward scale
        let u = chain_utility(&inst, &strategy, inst.rewards());
        prop_assert!((u - base.psi).abs() <= 20.0 * TOL);
    }

    #[test]
    fn continuous_optimum_passes_first_order_check(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let pages = rng.random_range(1..=10);
        let inst = random_skeleton(&mut rng, pages);
        let (_, strategy) = value_iterate(&inst, &config(1e-11, Sweep::Jacobi)).unwrap();
        let p = build_transition(&inst, &strategy).unwrap();
        let report = continuous_optimality_check(&inst, &p, 1e-7).unwrap();
        prop_assert!(report.optimal, "defect {}", report.max_defect);
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 24,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn weak_duality_and_subgradient(seed in any::<u64>(), l1 in 0.0f64..5.0, l2 in 0.0f64..5.0) {
        let inst = coupled_instance(seed);
        let lp = lp_solve(&lp_formulate(&inst, LpCap::default()).unwrap(), 1e-11).unwrap();
        let cfg = config(1e-11, Sweep::Jacobi);
        let a = dual_value(&inst, &Multipliers::new(vec![l1]).unwrap(), &cfg).unwrap();
        let b = dual_value(&inst, &Multipliers::new(vec![l2]).unwrap(), &cfg).unwrap();
        let scale = lp.value.abs().max(1.0);
        prop_assert!(a.theta >= lp.value - 1e-8 * scale);
        prop_assert!(b.theta >= lp.value - 1e-8 * scale);
        // V - <d, rho*> is a subgradient of theta
        prop_assert!(b.theta >= a.theta - a.g[0] * (l2 - l1) - 1e-8 * scale);
    }

    #[test]
    fn coupled_bounds_are_consistent(seed in any::<u64>()) {
        let inst = coupled_instance(seed);
        let lp = lp_solve(&lp_formulate(&inst, LpCap::default()).unwrap(), 1e-11).unwrap();
        let sol = match solve_coupled(&inst, &coupled_config()) {
            Ok(sol) => sol,
            Err(CoupledError::NoFeasibleFound(sol) | CoupledError::MaxOuterExceeded(sol)) => *sol,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let best_theta = sol.history.iter().map(|h| h.theta).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(sol.dual_bound, best_theta);
        let scale = lp.value.abs().max(1.0);
        prop_assert!(sol.dual_bound >= lp.value - 1e-8 * scale);
        if let Some(primal) = sol.best_primal {
            prop_assert!(primal <= lp.value + 1e-8 * scale);
        }
        let bound = inst.coupling()[0].bound;
        if let Some(c) = &sol.candidate {
            prop_assert!(c.coupling[0] <= bound + 1e-8);
        }
        // a feasible iterate is checked against the exact chain
        if let Some((strategy, value)) = &sol.best_feasible {
            let (u, coupling) = if inst.is_discrete() {
                exact_evaluation(&inst, strategy).unwrap()
            } else {
                let p = build_transition(&inst, strategy).unwrap();
                let rho = occupation(&stationary(&p, 1e-14, 1_000_000).unwrap(), &p);
                (utility(&rho, inst.rewards()), vec![rho.inner(&inst.coupling()[0].cost)])
            };
            prop_assert!(coupling[0] <= bound + 1e-8, "{} > {bound}", coupling[0]);
            prop_assert!((u - value).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn inactive_coupling_reproduces_local_optimum(seed in any::<u64>()) {
        let inst = instance(seed);
        let (state, _) = value_iterate(&inst, &config(1e-11, Sweep::Jacobi)).unwrap();
        let n = inst.num_pages();
        let inactive = inst.with_coupling(vec![CouplingConstraint {
            cost: LinkWeights::per_page(vec![1.0; n]),
            bound: 2.0,
        }]);
        let sol = solve_coupled(&inactive, &coupled_config()).unwrap();
        prop_assert!((sol.dual_bound - state.psi).abs() <= 1e-6);
        prop_assert!((sol.best_primal.unwrap() - state.psi).abs() <= 1e-6);
    }

    #[test]
    fn master_rule_characterizes_optima(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let inst = discrete(&mut rng, 6, 9, true);
        let bf = brute_force_optimum(&inst, EnumerationBudget::new(20).unwrap()).unwrap();
        let spread = bf.values.iter().fold(0.0f64, |m, v| m.max((v - bf.value).abs())).max(1.0);
        for (mask, &value) in bf.values.iter().enumerate() {
            let strategy = bf.strategy_of(&inst, mask as u64);
            let report = master_ordering(&inst, &strategy, TIE_TOL).unwrap();
            if report.violations.is_empty() {
                prop_assert!(value >= bf.value - 1e-9 * spread, "mask {mask}: {value} < {}", bf.value);
            }
            if value >= bf.value - 1e-12 * spread {
                prop_assert!(report.violations.is_empty(), "optimal mask {mask}: {:?}", report.violations);
            }
        }
    }
}
