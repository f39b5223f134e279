//! `pro`: batch frontend for PageRank optimization. Every command prints one
//! JSON report on stdout; failures print a JSON error on stderr.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use report::CliError;

#[derive(Debug, Parser)]
#[command(name = "pro", version, about = "PageRank optimization by ergodic control")]
struct Cli {
    /// Report zero wall time so identical runs print identical bytes.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    Jacobi,
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StepArg {
    Polyak,
    Harmonic,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// PageRank and utility of a strategy (default: no facultative link).
    Pagerank {
        instance: PathBuf,
        #[arg(long)]
        strategy: Option<PathBuf>,
        /// L1 change at which power iteration stops.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Optimal strategy under local constraints.
    Optimize {
        instance: PathBuf,
        /// Output rows as link subsets or as transition rows (default: by
        /// instance kind).
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, value_enum, default_value = "jacobi")]
        sweep: SweepArg,
        /// Strategy file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dual bound and primal candidates under coupling constraints.
    OptimizeCoupled {
        instance: PathBuf,
        #[arg(long, default_value_t = 200)]
        max_outer: usize,
        #[arg(long, value_enum, default_value = "polyak")]
        step_rule: StepArg,
        /// Initial step of the harmonic rule.
        #[arg(long, default_value_t = 1.0)]
        step0: f64,
        /// Relative duality gap at which to stop.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Tolerance of each inner value iteration.
        #[arg(long, default_value_t = 1e-10)]
        inner_tol: f64,
        /// Strategy file for the best primal solution.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Master page ordering and link classification of a strategy.
    Analyze {
        instance: PathBuf,
        strategy: PathBuf,
        #[arg(long, default_value_t = pro_core::analysis::TIE_TOL)]
        tol: f64,
    },
    /// Brute-force enumeration checked against value iteration.
    Verify {
        instance: PathBuf,
        #[arg(long, default_value_t = 20)]
        max_facultative: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli);
    match result {
        Ok((report, code)) => {
            println!("{report}");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(String, u8), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    let det = cli.deterministic;
    match &cli.command {
        Command::Pagerank {
            instance,
            strategy,
            tol,
            max_iter,
        } => commands::pagerank(instance, strategy.as_deref(), *tol, *max_iter, det),
        Command::Optimize {
            instance,
            mode,
            tol,
            max_iter,
            sweep,
            out,
        } => {
            let sweep = match sweep {
                SweepArg::Jacobi => pro_core::solver::Sweep::Jacobi,
                SweepArg::GaussSeidel => pro_core::solver::Sweep::GaussSeidel,
            };
            let continuous = mode.map(|m| matches!(m, Mode::Continuous));
            commands::optimize(instance, continuous, *tol, *max_iter, sweep, out.as_deref(), det)
        }
        Command::OptimizeCoupled {
            instance,
            max_outer,
            step_rule,
            step0,
            tol,
            inner_tol,
            out,
        } => {
            let step_rule = match step_rule {
                StepArg::Polyak => pro_core::solver::StepRule::Polyak,
                StepArg::Harmonic => pro_core::solver::StepRule::Harmonic { s0: *step0 },
            };
            commands::optimize_coupled(instance, *max_outer, step_rule, *tol, *inner_tol, out.as_deref(), det)
        }
        Command::Analyze {
            instance,
            strategy,
            tol,
        } => commands::analyze(instance, strategy, *tol, det),
        Command::Verify {
            instance,
            max_facultative,
        } => commands::verify(instance, *max_facultative, det),
    }
}
