//! Instance generators: the two-page worked examples, random small
//! instances for cross-checks, and large power-law graphs.

use rand::prelude::*;

use crate::chain::{occupation, stationary};
use crate::model::{build_transition, CouplingConstraint, InstanceBuilder, LinkWeights, Skeleton, WebGraphInstance};
use crate::solver::local::{solve_with_rewards, SolverConfig};

/// Two pages, every link facultative, `r = [[1, 10], [2, 2]]`, `alpha = 0.85`.
pub fn two_page_example() -> WebGraphInstance {
    InstanceBuilder::new(2, 0.85)
        .facultative_links([(0, 0), (0, 1), (1, 0), (1, 1)])
        .rewards(LinkWeights::from_dense(&[vec![1.0, 10.0], vec![2.0, 2.0]]))
        .build()
        .expect("valid example")
}

/// Two pages, every link facultative, maximizing the PageRank of page 1
/// subject to `pi_1 <= pi_0`.
pub fn two_page_coupled() -> WebGraphInstance {
    InstanceBuilder::new(2, 0.85)
        .facultative_links([(0, 0), (0, 1), (1, 0), (1, 1)])
        .rewards(LinkWeights::per_page(vec![0.0, 1.0]))
        .coupling(CouplingConstraint {
            cost: LinkWeights::per_page(vec![-1.0, 1.0]),
            bound: 0.0,
        })
        .build()
        .expect("valid example")
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(zero_prob) {
                    0.0
                } else {
                    rng.random_range(0.05..1.0)
                }
            })
            .collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Shape of a random small discrete instance.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteShape {
    pub pages: usize,
    pub facultative: usize,
    pub obligatory_prob: f64,
    /// Rewards depend on the origin page only.
    pub per_page_rewards: bool,
}

/// Random discrete instance with exactly `shape.facultative` facultative
/// links, random positive `z`, a dangling distribution that may vanish on
/// some pages, and rewards uniform in `[-1, 1]`.
pub fn random_discrete<R: Rng>(rng: &mut R, shape: DiscreteShape) -> WebGraphInstance {
    let n = shape.pages;
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    pairs.shuffle(rng);
    let k = shape.facultative.min(pairs.len());
    let (fac, rest) = pairs.split_at(k);
    let obl: Vec<(usize, usize)> = rest
        .iter()
        .copied()
        .filter(|_| rng.random_bool(shape.obligatory_prob))
        .collect();
    let rewards = if shape.per_page_rewards {
        LinkWeights::per_page((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
    } else {
        let entries: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, rng.random_range(-1.0..=1.0)))
            .collect();
        LinkWeights::per_link(n, &entries, 0.0)
    };
    let damping = rng.random_range(0.5..0.95);
    let mut b = InstanceBuilder::new(n, damping)
        .teleport(random_distribution(rng, n, 0.0))
        .facultative_links(fac.iter().copied())
        .obligatory_links(obl)
        .rewards(rewards);
    if rng.random_bool(0.5) {
        b = b.dangling_teleport(random_distribution(rng, n, 0.4));
    }
    b.build().expect("generator emits valid instances")
}

/// Random instance whose controlled pages carry skeleton constraints,
/// with per-link rewards in `[-1, 1]`. Uncontrolled pages keep a few
/// obligatory links or dangle. A single page stays uncontrolled, since
/// banning its self-link would leave no admissible row.
pub fn random_skeleton<R: Rng>(rng: &mut R, pages: usize) -> WebGraphInstance {
    let n = pages;
    let mut b = InstanceBuilder::new(n, rng.random_range(0.6..0.9)).teleport(random_distribution(rng, n, 0.0));
    for i in 0..n {
        if n > 1 && rng.random_bool(0.6) {
            let q = random_distribution(rng, n, 0.7);
            let banned: Vec<usize> = (0..n).filter(|&j| j == i || rng.random_bool(0.2)).collect();
            let banned = if banned.len() == n { vec![i] } else { banned };
            b = b.skeleton(
                i,
                Skeleton {
                    q,
                    mu: rng.random_range(0.1..0.9),
                    banned,
                },
            );
        } else {
            for j in 0..n {
                if j != i && rng.random_bool(2.0 / n as f64) {
                    b = b.obligatory(i, j);
                }
            }
        }
    }
    let entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, rng.random_range(-1.0..=1.0)))
        .collect();
    b.rewards(LinkWeights::per_link(n, &entries, 0.0))
        .build()
        .expect("generator emits valid instances")
}

/// Adds one coupling row with random costs in `[-1, 1]` and a bound strictly
/// between the smallest attainable `<d, rho>` and its value at the
/// unconstrained optimum, so the row binds while leaving slack. Costs that
/// the unconstrained optimum already minimizes are redrawn.
pub fn with_random_coupling<R: Rng>(rng: &mut R, instance: &WebGraphInstance) -> WebGraphInstance {
    let n = instance.num_pages();
    let cfg = SolverConfig {
        tol: 1e-10,
        max_iter: Some(1_000_000),
        ..SolverConfig::default()
    };
    let best = solve_with_rewards(instance, instance.rewards(), &cfg)
        .expect("converges")
        .1;
    let p = build_transition(instance, &best).expect("solver strategies are admissible");
    let rho = occupation(&stationary(&p, 1e-13, 1_000_000).expect("damped chains converge"), &p);
    let mut last = None;
    for _ in 0..20 {
        let entries: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, rng.random_range(-1.0..=1.0)))
            .collect();
        let cost = LinkWeights::per_link(n, &entries, 0.0);
        let lo = -solve_with_rewards(instance, &cost.scaled(-1.0), &cfg)
            .expect("converges")
            .0
            .psi;
        let at_best = rho.inner(&cost);
        if at_best - lo > 1e-6 {
            let bound = lo + rng.random_range(0.2..0.8) * (at_best - lo);
            return instance.with_coupling(vec![CouplingConstraint { cost, bound }]);
        }
        last = Some((cost, at_best));
    }
    // no cost separates the optimum from the minimum: leave the row slack
    let (cost, at_best) = last.expect("at least one draw");
    instance.with_coupling(vec![CouplingConstraint {
        cost,
        bound: at_best + 0.1,
    }])
}

/// Parameters of a synthetic web graph with a controlled site.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawShape {
    pub pages: usize,
    /// Mean number of obligatory outlinks per page.
    pub mean_out_degree: f64,
    /// Share of pages without outlinks.
    pub dangling_fraction: f64,
    /// Every `site_stride`-th page belongs to the controlled site.
    pub site_stride: usize,
    /// Facultative links from each site page to other site pages.
    pub facultative_per_site_page: usize,
    pub damping: f64,
    pub seed: u64,
}

impl PowerLawShape {
    /// About 6.75 obligatory and 5 facultative links per page on average.
    pub fn crawl_like(pages: usize, seed: u64) -> Self {
        Self {
            pages,
            mean_out_degree: 6.75,
            dangling_fraction: 0.1,
            site_stride: 20,
            facultative_per_site_page: 100,
            damping: 0.85,
            seed,
        }
    }
}

/// Power-law web graph whose controlled site may add links between its own
/// pages. Rewards are the indicator of the site, so the utility is the
/// site's total PageRank.
pub fn power_law(shape: PowerLawShape) -> WebGraphInstance {
    let mut rng = StdRng::seed_from_u64(shape.seed);
    let n = shape.pages;
    let stride = shape.site_stride.max(1);
    let site_size = n.div_ceil(stride);
    let mut b = InstanceBuilder::new(n, shape.damping);
    // Pareto out-degrees with the requested mean over non-dangling pages
    let live_mean = shape.mean_out_degree / (1.0 - shape.dangling_fraction);
    let tail = 2.5f64;
    let scale = live_mean * (tail - 1.0) / tail;
    let mut obligatory = Vec::with_capacity((n as f64 * shape.mean_out_degree * 1.05) as usize);
    let mut facultative = Vec::with_capacity(site_size * shape.facultative_per_site_page);
    for i in 0..n {
        if rng.random_bool(shape.dangling_fraction) {
            continue;
        }
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let degree = ((scale / u.powf(1.0 / tail)).round() as usize).clamp(1, n - 1);
        for _ in 0..degree {
            // skewed targets give a heavy-tailed in-degree
            let x: f64 = rng.random();
            let j = ((n as f64) * x.powi(3)) as usize;
            if j != i {
                obligatory.push((i, j.min(n - 1)));
            }
        }
    }
    obligatory.sort_unstable();
    obligatory.dedup();
    for s in 0..site_size {
        let i = s * stride;
        for _ in 0..shape.facultative_per_site_page.min(site_size - 1) {
            let j = rng.random_range(0..site_size) * stride;
            if j != i && obligatory.binary_search(&(i, j)).is_err() {
                facultative.push((i, j));
            }
        }
    }
    b = b.obligatory_links(obligatory).facultative_links(facultative);
    let site: Vec<f64> = (0..n).map(|i| if i % stride == 0 { 1.0 } else { 0.0 }).collect();
    b.rewards(LinkWeights::per_page(site))
        .build()
        .expect("generator emits valid instances")
}
