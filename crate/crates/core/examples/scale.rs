//! Times value iteration on a synthetic power-law web graph.
//!
//! `cargo run --release -p pro-core --example scale -- [pages]` (default 400000).

use std::time::Instant;

use pro_core::solver::{iteration_budget, value_iterate, SolverConfig};
use pro_core::synth::{power_law, PowerLawShape};

fn main() {
    let pages: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400_000);
    let t = Instant::now();
    let inst = power_law(PowerLawShape::crawl_like(pages, 42));
    println!(
        "pages {pages}, obligatory {}, facultative {}, generated in {:.2?}",
        inst.num_obligatory(),
        inst.num_facultative(),
        t.elapsed()
    );
    let cfg = SolverConfig {
        tol: 1e-8,
        ..SolverConfig::default()
    };
    let t = Instant::now();
    let (state, _) = value_iterate(&inst, &cfg).expect("converges");
    println!(
        "iterations {} (budget {}), psi {:.6}, residual {:.2e}, solved in {:.2?}",
        state.iterations,
        iteration_budget(0.85, 1e-8),
        state.psi,
        state.residual,
        t.elapsed()
    );
}
