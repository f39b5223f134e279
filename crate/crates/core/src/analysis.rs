//! Structure of optimal strategies: the master page ordering with its link
//! selection rule for discrete problems, and the first-order optimality
//! check for continuous ones.

use serde::Serialize;
use thiserror::Error;

use crate::chain::{mean_reward_before_teleport, ChainError, MeanRewardVector};
use crate::model::{
    build_transition, LinkWeights, ModelError, PageControl, Strategy, TransitionMatrix, WebGraphInstance,
};
use crate::polytope::{linear_maximize, ActionShape, LocalActionSet, PolytopeError, Space};
use crate::solver::iteration_budget;

/// Default relative tolerance on the link threshold.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("rewards depend on the link target; the master page rule needs per-page rewards")]
    PerLinkRewards,
    #[error("page {0} is not discrete")]
    NotDiscrete(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    /// `v_j` above the threshold: every optimal strategy activates it.
    Required,
    /// `v_j` below the threshold: no optimal strategy activates it.
    Forbidden,
    /// At the threshold: either choice is optimal.
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub from: usize,
    pub to: usize,
    pub class: LinkClass,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A required link is off.
    MissingLink { from: usize, to: usize },
    /// A forbidden link is on.
    ExtraLink { from: usize, to: usize },
    /// A page without obligatory links activates links although the
    /// dangling row has a strictly larger mean reward.
    NoLinkPreferred { page: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MasterReport {
    /// Page with the largest mean reward before teleportation.
    pub master: usize,
    /// Pages by decreasing `v`, ties by index.
    pub ordering: Vec<usize>,
    pub v: Vec<f64>,
    /// Per controlled page, `(v_i - r_i) / alpha`.
    pub thresholds: Vec<Option<f64>>,
    pub links: Vec<LinkReport>,
    pub violations: Vec<Violation>,
}

/// `v` of a chain, accurate far below the tie tolerance.
fn mean_reward(p: &TransitionMatrix, rewards: &LinkWeights) -> Result<MeanRewardVector, ChainError> {
    let a = p.damping();
    let tol = 1e-13 * rewards.sup_norm().max(1.0) / (1.0 - a);
    mean_reward_before_teleport(p, rewards, tol, iteration_budget(a, 1e-16) + 100)
}

/// Pages by decreasing value, ties by increasing index.
fn ordering(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
    order
}

/// Classifies every facultative link of a discrete strategy against the
/// threshold `(v_i - r_i) / alpha` and lists the links whose status
/// contradicts their class. `tol` is relative to `max(1, |threshold|)`.
pub fn master_ordering(
    instance: &WebGraphInstance,
    strategy: &Strategy,
    tol: f64,
) -> Result<MasterReport, AnalysisError> {
    let r = instance.rewards().page_values().ok_or(AnalysisError::PerLinkRewards)?;
    let n = instance.num_pages();
    if let Some(i) = (0..n).find(|&i| instance.control(i) == PageControl::Skeleton) {
        return Err(AnalysisError::NotDiscrete(i));
    }
    let p = build_transition(instance, strategy)?;
    let v = mean_reward(&p, instance.rewards())?.v;
    let a = instance.damping();
    let zd = instance.teleport().dangling();
    let mut thresholds = vec![None; n];
    let mut links = Vec::new();
    let mut violations = Vec::new();
    for i in (0..n).filter(|&i| instance.control(i) == PageControl::Discrete) {
        let active = strategy.activated(i).ok_or(AnalysisError::NotDiscrete(i))?;
        let t = (v[i] - r[i]) / a;
        let eps = tol * t.abs().max(1.0);
        thresholds[i] = Some(t);
        for &j in instance.facultative(i) {
            let class = if v[j] > t + eps {
                LinkClass::Required
            } else if v[j] < t - eps {
                LinkClass::Forbidden
            } else {
                LinkClass::Tie
            };
            let on = active.binary_search(&j).is_ok();
            match (class, on) {
                (LinkClass::Required, false) => violations.push(Violation::MissingLink { from: i, to: j }),
                (LinkClass::Forbidden, true) => violations.push(Violation::ExtraLink { from: i, to: j }),
                _ => {}
            }
            links.push(LinkReport {
                from: i,
                to: j,
                class,
                active: on,
            });
        }
        if instance.obligatory(i).is_empty() && !active.is_empty() {
            let dangling: f64 = zd.iter().zip(&v).map(|(z, x)| z * x).sum();
            if dangling > t + eps {
                violations.push(Violation::NoLinkPreferred { page: i });
            }
        }
    }
    let ordering = ordering(&v);
    Ok(MasterReport {
        master: ordering[0],
        ordering,
        v,
        thresholds,
        links,
        violations,
    })
}

/// Result of the continuous first-order optimality check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub optimal: bool,
    pub max_defect: f64,
    /// Per page, `max_nu nu.(r_i + v) - P_i.(r_i + v)` over its action set.
    pub defects: Vec<f64>,
}

/// Transition rows a page may choose, in damped coordinates.
fn action_set(instance: &WebGraphInstance, i: usize) -> Option<LocalActionSet> {
    let tp = instance.teleport();
    let (a, z) = (tp.damping(), tp.zapping());
    let space = Space::Damped {
        damping: a,
        zapping: z.to_vec(),
    };
    let shape = match instance.control(i) {
        PageControl::Uncontrolled => return None,
        PageControl::Discrete => ActionShape::DiscreteUniform {
            obligatory: instance.obligatory(i).to_vec(),
            facultative: instance.facultative(i).to_vec(),
            dangling: tp.dangling().to_vec(),
        },
        PageControl::Skeleton => {
            let sk = instance.skeleton(i).expect("skeleton page");
            let mut lower: Vec<f64> = z.iter().map(|z| (1.0 - a) * z).collect();
            for (j, l) in sk.lower_bounds() {
                lower[j] += a * l;
            }
            let mut upper: Vec<f64> = z.iter().map(|z| a + (1.0 - a) * z).collect();
            for &j in &sk.banned {
                upper[j] = lower[j];
            }
            // the box is already in damped coordinates
            return Some(LocalActionSet {
                shape: ActionShape::BoxSimplex { lower, upper },
                space,
            });
        }
    };
    Some(LocalActionSet { shape, space })
}

/// Checks that every row of `p` maximizes `nu.(r_i + v(P))` over its
/// page's action set. With per-page rewards this is `nu.v(P)`. Rows of
/// uncontrolled pages have zero defect.
pub fn continuous_optimality_check(
    instance: &WebGraphInstance,
    p: &TransitionMatrix,
    tol: f64,
) -> Result<OptimalityReport, AnalysisError> {
    let n = instance.num_pages();
    let rewards = instance.rewards();
    let v = mean_reward(p, rewards)?.v;
    let dense_p = (0..n).map(|i| {
        let mut row: Vec<f64> = p.teleport().zapping().iter().map(|z| (1.0 - p.damping()) * z).collect();
        let s = p.s_row_dense(i);
        row.iter_mut().zip(&s).for_each(|(x, s)| *x += p.damping() * s);
        row
    });
    let mut defects = Vec::with_capacity(n);
    for (i, row) in dense_p.enumerate() {
        let Some(set) = action_set(instance, i) else {
            defects.push(0.0);
            continue;
        };
        let c: Vec<f64> = (0..n).map(|j| rewards.get(i, j) + v[j]).collect();
        let best = linear_maximize(&set, &c)?.value;
        let current: f64 = row.iter().zip(&c).map(|(x, c)| x * c).sum();
        defects.push((best - current).max(0.0));
    }
    let max_defect = defects.iter().copied().fold(0.0, f64::max);
    Ok(OptimalityReport {
        optimal: max_defect <= tol,
        max_defect,
        defects,
    })
}
