//! Value iteration for problems with local constraints only.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    distribution_dot, ContinuousRow, LinkRow, LinkWeights, PageChoice, PageControl, Strategy, WebGraphInstance,
};
use crate::polytope::{greedy_uniform, sort_candidates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sweep {
    /// Every page reads the previous iterate; pages update in parallel.
    #[default]
    Jacobi,
    /// Pages update in place, in index order.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Target sup-norm error on `w`.
    pub tol: f64,
    /// Defaults to the iteration budget plus 50.
    pub max_iter: Option<usize>,
    pub sweep: Sweep,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: None,
            sweep: Sweep::Jacobi,
        }
    }
}

/// Bias `w` and ergodic value `psi = (1 - alpha) z w` of the last iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DpState {
    pub w: Vec<f64>,
    pub psi: f64,
    pub iterations: usize,
    /// `|T(w) - w|_inf`.
    pub residual: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("instance has coupling constraints; use the coupled solver")]
    CouplingPresent,
    #[error("no convergence within {} iterations (residual {:e})", .0.iterations, .0.residual)]
    MaxIterExceeded(Box<DpState>),
}

/// `ceil(log tol / log alpha)`: sweeps needed to shrink an error by `tol`.
pub fn iteration_budget(damping: f64, tol: f64) -> usize {
    ((tol.ln() / damping.ln()).ceil()).max(0.0) as usize
}

enum Action {
    /// Frozen row `teleport_weight * Z + sum_k vals[k] e_cols[k]`.
    Fixed {
        teleport_weight: f64,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
    Discrete,
    /// Box-simplex with sparse lower bounds; remaining mass goes to the best
    /// page outside `banned`.
    Skeleton {
        lower: Vec<(usize, f64)>,
        lower_cols: Vec<usize>,
        free_mass: f64,
        banned: Vec<usize>,
    },
}

/// Per-page data that does not depend on `w`.
struct Context<'a> {
    inst: &'a WebGraphInstance,
    rewards: &'a LinkWeights,
    actions: Vec<Action>,
    /// `(1 - alpha) sum_l z_l r_il`.
    constant: Vec<f64>,
    /// `sum_l Z_l r_il`.
    dangling_reward: Vec<f64>,
    damping: f64,
}

impl<'a> Context<'a> {
    fn new(inst: &'a WebGraphInstance, rewards: &'a LinkWeights) -> Self {
        let n = inst.num_pages();
        let tp = inst.teleport();
        let a = tp.damping();
        let actions = (0..n)
            .map(|i| match inst.control(i) {
                PageControl::Discrete => Action::Discrete,
                PageControl::Uncontrolled => {
                    let row = LinkRow::uniform(inst.obligatory(i));
                    Action::Fixed {
                        teleport_weight: row.teleport_weight,
                        cols: row.entries.iter().map(|e| e.0).collect(),
                        vals: row.entries.iter().map(|e| e.1).collect(),
                    }
                }
                PageControl::Skeleton => {
                    let sk = inst.skeleton(i).expect("skeleton page");
                    let lower = sk.lower_bounds();
                    let free_mass = (1.0 - lower.iter().map(|e| e.1).sum::<f64>()).max(0.0);
                    let mut banned = sk.banned.clone();
                    banned.sort_unstable();
                    Action::Skeleton {
                        lower_cols: lower.iter().map(|e| e.0).collect(),
                        lower,
                        free_mass,
                        banned,
                    }
                }
            })
            .collect();
        let (constant, dangling_reward) = (0..n)
            .into_par_iter()
            .map(|i| {
                (
                    (1.0 - a) * distribution_dot(rewards, i, tp.zapping()),
                    distribution_dot(rewards, i, tp.dangling()),
                )
            })
            .unzip();
        Self {
            inst,
            rewards,
            actions,
            constant,
            dangling_reward,
            damping: a,
        }
    }

    fn has_skeleton(&self) -> bool {
        self.actions.iter().any(|a| matches!(a, Action::Skeleton { .. }))
    }

    /// `max_nu nu . (r_i + w)` over the page's link-space actions, with the
    /// maximizing row when `extract` is set.
    fn page_max(
        &self,
        i: usize,
        w: &[f64],
        zw: f64,
        by_value: &mut dyn Iterator<Item = usize>,
        buf: &mut Vec<(f64, usize)>,
        extract: bool,
    ) -> (f64, Option<PageChoice>) {
        let r = self.rewards;
        match &self.actions[i] {
            Action::Fixed {
                teleport_weight,
                cols,
                vals,
            } => {
                let mut acc = teleport_weight * (self.dangling_reward[i] + zw);
                let mut k = 0;
                r.for_each_in_row(i, cols, |j, rij| {
                    acc += vals[k] * (rij + w[j]);
                    k += 1;
                });
                (acc, extract.then_some(PageChoice::Uncontrolled))
            }
            Action::Discrete => {
                let (o, f) = (self.inst.obligatory(i), self.inst.facultative(i));
                let mut osum = 0.0;
                r.for_each_in_row(i, o, |j, rij| osum += rij + w[j]);
                buf.clear();
                r.for_each_in_row(i, f, |j, rij| buf.push((rij + w[j], j)));
                sort_candidates(buf);
                let no_link = o.is_empty().then(|| self.dangling_reward[i] + zw);
                let g = greedy_uniform(osum, o.len(), buf, no_link);
                let choice = extract.then(|| {
                    let links = if g.no_link {
                        Vec::new()
                    } else {
                        buf[..g.taken].iter().map(|e| e.1).collect()
                    };
                    PageChoice::Discrete(links)
                });
                (g.value, choice)
            }
            Action::Skeleton {
                lower,
                lower_cols,
                free_mass,
                banned,
            } => {
                let mut acc = 0.0;
                let mut k = 0;
                r.for_each_in_row(i, lower_cols, |j, rij| {
                    acc += lower[k].1 * (rij + w[j]);
                    k += 1;
                });
                let mut best: Option<(f64, usize)> = None;
                if *free_mass > 0.0 {
                    // best override, then the best plain page
                    for &(j, rij) in r.overrides(i) {
                        if banned.binary_search(&j).is_err() && best.is_none_or(|b| rij + w[j] > b.0) {
                            best = Some((rij + w[j], j));
                        }
                    }
                    let overridden = r.overrides(i);
                    let mut plain = None;
                    for j in by_value {
                        if banned.binary_search(&j).is_err() && overridden.binary_search_by_key(&j, |e| e.0).is_err() {
                            plain = Some(j);
                            break;
                        }
                    }
                    if let Some(j) = plain {
                        let c = r.base()[i] + w[j];
                        if best.is_none_or(|b| c > b.0 || (c == b.0 && j < b.1)) {
                            best = Some((c, j));
                        }
                    }
                    let (c, _) = best.expect("a skeleton page has an admissible target");
                    acc += free_mass * c;
                }
                let choice = extract.then(|| {
                    let mut row = lower.clone();
                    if let Some((_, j)) = best {
                        match row.binary_search_by_key(&j, |e| e.0) {
                            Ok(k) => row[k].1 += free_mass,
                            Err(k) => row.insert(k, (j, *free_mass)),
                        }
                    }
                    let tp = self.inst.teleport();
                    PageChoice::Continuous(ContinuousRow::from_link_row(&row, tp.damping(), tp.zapping()))
                });
                (acc, choice)
            }
        }
    }

    fn t_page(
        &self,
        i: usize,
        w: &[f64],
        zw: f64,
        by_value: &mut dyn Iterator<Item = usize>,
        buf: &mut Vec<(f64, usize)>,
    ) -> f64 {
        self.damping * self.page_max(i, w, zw, by_value, buf, false).0 + self.constant[i]
    }

    /// One Jacobi application of `T`.
    fn jacobi(&self, w: &[f64]) -> Vec<f64> {
        let zw = dot(self.inst.teleport().dangling(), w);
        let order = self.has_skeleton().then(|| descending_order(w));
        (0..w.len())
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                let mut it = order.iter().flatten().copied();
                self.t_page(i, w, zw, &mut it, buf)
            })
            .collect()
    }

    /// One in-place Gauss-Seidel sweep; returns the sup-norm change.
    fn gauss_seidel(&self, w: &mut [f64]) -> f64 {
        let zd = self.inst.teleport().dangling();
        let mut zw = dot(zd, w);
        let mut ordered: Option<BTreeSet<(i64, usize)>> = self
            .has_skeleton()
            .then(|| w.iter().enumerate().map(|(j, &x)| (desc_key(x), j)).collect());
        let mut buf = Vec::new();
        let mut change = 0.0f64;
        for i in 0..w.len() {
            let mut it = ordered.iter().flatten().map(|e| e.1);
            let new = self.t_page(i, w, zw, &mut it, &mut buf);
            let old = w[i];
            change = change.max((new - old).abs());
            zw += zd[i] * (new - old);
            if let Some(set) = ordered.as_mut() {
                set.remove(&(desc_key(old), i));
                set.insert((desc_key(new), i));
            }
            w[i] = new;
        }
        change
    }

    /// `T(w)` together with the per-page maximizers.
    fn extract(&self, w: &[f64]) -> (Vec<f64>, Strategy) {
        let zw = dot(self.inst.teleport().dangling(), w);
        let order = self.has_skeleton().then(|| descending_order(w));
        let (tw, pages): (Vec<f64>, Vec<PageChoice>) = (0..w.len())
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                let mut it = order.iter().flatten().copied();
                let (v, c) = self.page_max(i, w, zw, &mut it, buf, true);
                (self.damping * v + self.constant[i], c.expect("extracted"))
            })
            .unzip();
        (tw, Strategy::new(pages))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integer key ordering floats decreasingly.
fn desc_key(x: f64) -> i64 {
    let bits = x.to_bits() as i64;
    let ascending = bits ^ (((bits >> 63) as u64) >> 1) as i64;
    -ascending - 1
}

/// Page indices by decreasing value, ties by increasing index.
fn descending_order(w: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.par_sort_unstable_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    order
}

/// Applies the Bellman operator
/// `T_i(w) = alpha max_nu nu (r_i + w) + (1 - alpha) sum_l z_l r_il`.
pub fn bellman_apply(instance: &WebGraphInstance, w: &[f64]) -> Vec<f64> {
    Context::new(instance, instance.rewards()).jacobi(w)
}

/// Solves the local problem by value iteration and extracts an optimal
/// strategy at the final iterate.
pub fn value_iterate(instance: &WebGraphInstance, config: &SolverConfig) -> Result<(DpState, Strategy), SolverError> {
    if !instance.coupling().is_empty() {
        return Err(SolverError::CouplingPresent);
    }
    solve_with_rewards(instance, instance.rewards(), config)
}

/// Value iteration on `instance` with `rewards` in place of its own,
/// ignoring coupling constraints.
pub(crate) fn solve_with_rewards(
    instance: &WebGraphInstance,
    rewards: &LinkWeights,
    config: &SolverConfig,
) -> Result<(DpState, Strategy), SolverError> {
    assert!(config.tol > 0.0, "tolerance must be positive");
    let a = instance.damping();
    let scale = rewards.sup_norm().max(1.0);
    let scaled = rewards.scaled(1.0 / scale);
    let ctx = Context::new(instance, &scaled);
    let tol = config.tol / scale;
    let max_iter = config.max_iter.unwrap_or(iteration_budget(a, tol) + 50);
    let stop = tol * (1.0 - a) / a;

    let mut w = vec![0.0; instance.num_pages()];
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        change = match config.sweep {
            Sweep::Jacobi => {
                let next = ctx.jacobi(&w);
                let c = sup_diff(&next, &w);
                w = next;
                c
            }
            Sweep::GaussSeidel => ctx.gauss_seidel(&mut w),
        };
        if change <= stop {
            break;
        }
    }
    let (tw, strategy) = ctx.extract(&w);
    let residual = sup_diff(&tw, &w) * scale;
    let zw = dot(instance.teleport().zapping(), &w);
    let state = DpState {
        psi: (1.0 - a) * zw * scale,
        w: w.into_iter().map(|x| x * scale).collect(),
        iterations,
        residual,
    };
    if change > stop {
        return Err(SolverError::MaxIterExceeded(Box::new(state)));
    }
    Ok((state, strategy))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
