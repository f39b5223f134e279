//! Exact ground truth for small instances: exhaustive strategy enumeration,
//! dense linear solves, finite differences, and vertex enumeration of facet
//! systems.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    build_transition, LinkWeights, ModelError, PageChoice, Strategy, Teleportation, TransitionMatrix, WebGraphInstance,
};
use crate::polytope::{FacetSystem, Relation};

/// Largest dense system the oracle accepts.
pub const MAX_DENSE_PAGES: usize = 500;
/// Hard cap on the number of facultative links enumerated.
pub const MAX_ENUMERATION: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration needs {needed} facultative links, budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("dense solve limited to {MAX_DENSE_PAGES} pages, got {0}")]
    TooLarge(usize),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("finite-difference step leaves the stochastic domain")]
    StepTooLarge,
    #[error("brute force needs a discrete instance")]
    NotDiscrete,
    #[error("no strategy satisfies the coupling constraints")]
    NoFeasibleStrategy,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    max_total_facultative: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self {
            max_total_facultative: 20,
        }
    }
}

impl EnumerationBudget {
    pub fn new(max_total_facultative: usize) -> Result<Self, OracleError> {
        if max_total_facultative > MAX_ENUMERATION {
            return Err(OracleError::BudgetExceeded {
                needed: max_total_facultative,
                budget: MAX_ENUMERATION,
            });
        }
        Ok(Self { max_total_facultative })
    }

    pub fn max_total_facultative(&self) -> usize {
        self.max_total_facultative
    }
}

/// Every uniform row on `O ∪ J`, `J ⊆ F`, in link space, indexed by the bit
/// mask of `J` over `facultative`. With no obligatory link the empty support
/// is replaced by the dangling row.
pub fn enumerate_discrete_actions(
    obligatory: &[usize],
    facultative: &[usize],
    dangling: &[f64],
) -> Result<Vec<Vec<f64>>, OracleError> {
    if facultative.len() > MAX_ENUMERATION {
        return Err(OracleError::BudgetExceeded {
            needed: facultative.len(),
            budget: MAX_ENUMERATION,
        });
    }
    let n = dangling.len();
    Ok((0..1u64 << facultative.len())
        .map(|mask| {
            let support: Vec<usize> = obligatory
                .iter()
                .copied()
                .chain(
                    facultative
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| mask >> k & 1 == 1)
                        .map(|e| *e.1),
                )
                .collect();
            if support.is_empty() {
                return dangling.to_vec();
            }
            let mut row = vec![0.0; n];
            for j in support {
                row[j] = 1.0 / (obligatory.len() + mask.count_ones() as usize) as f64;
            }
            row
        })
        .collect())
}

fn check_dense(n: usize) -> Result<(), OracleError> {
    if n > MAX_DENSE_PAGES {
        Err(OracleError::TooLarge(n))
    } else {
        Ok(())
    }
}

/// Solves `pi (I - P) = 0`, `pi e = 1` with a partial-pivoting LU.
pub fn exact_stationary(p: &[Vec<f64>]) -> Result<Vec<f64>, OracleError> {
    let n = p.len();
    check_dense(n)?;
    // transpose of I - P with its last column replaced by ones
    let mut m = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - p[j][i]);
    m.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = m.lu().solve(&rhs).ok_or(OracleError::SingularSystem)?;
    if pi.iter().any(|x| !x.is_finite()) {
        return Err(OracleError::SingularSystem);
    }
    Ok(pi.iter().copied().collect())
}

fn resolvent_solve(p: &TransitionMatrix, rhs: DVector<f64>, transpose: bool) -> Result<DVector<f64>, OracleError> {
    let n = p.n();
    check_dense(n)?;
    let s = p.to_dense_s();
    let a = p.damping();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let sij = if transpose { s[j][i] } else { s[i][j] };
        f64::from(u8::from(i == j)) - a * sij
    });
    m.lu().solve(&rhs).ok_or(OracleError::SingularSystem)
}

/// `(1 - alpha) z (I - alpha S)^-1`.
pub fn closed_form_stationary(p: &TransitionMatrix) -> Result<Vec<f64>, OracleError> {
    let a = p.damping();
    let rhs = DVector::from_iterator(p.n(), p.teleport().zapping().iter().map(|z| (1.0 - a) * z));
    Ok(resolvent_solve(p, rhs, true)?.iter().copied().collect())
}

/// `v = (I - alpha S)^-1 rbar` by a direct solve.
pub fn exact_mean_reward(p: &TransitionMatrix, rewards: &LinkWeights) -> Result<Vec<f64>, OracleError> {
    let rhs = DVector::from_vec(p.mean_rewards(rewards));
    Ok(resolvent_solve(p, rhs, false)?.iter().copied().collect())
}

/// `sum_ij pi_i P_ij w_ij` for a dense `P`.
pub fn dense_inner(pi: &[f64], p: &[Vec<f64>], w: &LinkWeights) -> f64 {
    pi.iter()
        .zip(p)
        .enumerate()
        .map(|(i, (pi_i, row))| pi_i * w.row_dot_dense(i, row))
        .sum()
}

/// Utility and coupling values `<d^k, rho>` of a strategy, solved densely.
pub fn exact_evaluation(instance: &WebGraphInstance, strategy: &Strategy) -> Result<(f64, Vec<f64>), OracleError> {
    check_dense(instance.num_pages())?;
    let p = build_transition(instance, strategy)?.to_dense_p();
    let pi = exact_stationary(&p)?;
    let coupling = instance
        .coupling()
        .iter()
        .map(|c| dense_inner(&pi, &p, &c.cost))
        .collect();
    Ok((dense_inner(&pi, &p, instance.rewards()), coupling))
}

pub fn exact_utility(instance: &WebGraphInstance, strategy: &Strategy) -> Result<f64, OracleError> {
    Ok(exact_evaluation(instance, strategy)?.0)
}

/// Slack allowed on coupling rows when filtering enumerated strategies.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub value: f64,
    pub strategy: Strategy,
    /// Facultative links in enumeration order; bit `k` of a mask activates
    /// `links[k]`.
    pub links: Vec<(usize, usize)>,
    /// Utility of every mask.
    pub values: Vec<f64>,
    /// Coupling feasibility of every mask.
    pub feasible: Vec<bool>,
}

impl BruteForce {
    pub fn strategy_of(&self, instance: &WebGraphInstance, mask: u64) -> Strategy {
        mask_strategy(instance, &self.links, mask)
    }
}

fn mask_strategy(instance: &WebGraphInstance, links: &[(usize, usize)], mask: u64) -> Strategy {
    let mut pages: Vec<Vec<usize>> = vec![Vec::new(); instance.num_pages()];
    for (k, &(i, j)) in links.iter().enumerate() {
        if mask >> k & 1 == 1 {
            pages[i].push(j);
        }
    }
    Strategy::new(pages.into_iter().map(PageChoice::Discrete).collect())
}

/// `a` precedes `b` in lexicographic order of activation vectors, the first
/// link being the most significant.
fn lex_less(a: u64, b: u64) -> bool {
    let d = a ^ b;
    d != 0 && a >> d.trailing_zeros() & 1 == 0
}

/// Optimal discrete strategy by exhaustive enumeration, restricted to
/// strategies meeting the coupling constraints. Ties go to the
/// lexicographically smallest activation vector.
pub fn brute_force_optimum(instance: &WebGraphInstance, budget: EnumerationBudget) -> Result<BruteForce, OracleError> {
    if !instance.is_discrete() {
        return Err(OracleError::NotDiscrete);
    }
    check_dense(instance.num_pages())?;
    let links: Vec<(usize, usize)> = (0..instance.num_pages())
        .flat_map(|i| instance.facultative(i).iter().map(move |&j| (i, j)))
        .collect();
    if links.len() > budget.max_total_facultative {
        return Err(OracleError::BudgetExceeded {
            needed: links.len(),
            budget: budget.max_total_facultative,
        });
    }
    let evals = (0..1u64 << links.len())
        .into_par_iter()
        .map(|mask| {
            let (u, c) = exact_evaluation(instance, &mask_strategy(instance, &links, mask))?;
            let ok = c
                .iter()
                .zip(instance.coupling())
                .all(|(v, row)| *v <= row.bound + FEASIBILITY_TOL);
            Ok((u, ok))
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    let mut best: Option<u64> = None;
    for (mask, &(u, ok)) in evals.iter().enumerate() {
        let mask = mask as u64;
        if !ok {
            continue;
        }
        best = match best {
            Some(b) if evals[b as usize].0 > u || (evals[b as usize].0 == u && lex_less(b, mask)) => Some(b),
            _ => Some(mask),
        };
    }
    let best = best.ok_or(OracleError::NoFeasibleStrategy)?;
    Ok(BruteForce {
        value: evals[best as usize].0,
        strategy: mask_strategy(instance, &links, best),
        links,
        values: evals.iter().map(|e| e.0).collect(),
        feasible: evals.iter().map(|e| e.1).collect(),
    })
}

fn dense_utility(p: &[Vec<f64>], rewards: &LinkWeights) -> Result<f64, OracleError> {
    let pi = exact_stationary(p)?;
    Ok(dense_inner(&pi, p, rewards))
}

/// Central difference `(U(P + hQ) - U(P - hQ)) / 2h`.
pub fn finite_diff_directional(
    p: &[Vec<f64>],
    rewards: &LinkWeights,
    q: &[Vec<f64>],
    h: f64,
) -> Result<f64, OracleError> {
    let shifted = |sign: f64| -> Result<Vec<Vec<f64>>, OracleError> {
        p.iter()
            .zip(q)
            .map(|(pr, qr)| {
                let row: Vec<f64> = pr.iter().zip(qr).map(|(a, b)| a + sign * h * b).collect();
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&x| x <= 0.0) || (sum - 1.0).abs() > 1e-12 {
                    return Err(OracleError::StepTooLarge);
                }
                Ok(row)
            })
            .collect()
    };
    let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
    Ok((dense_utility(&plus, rewards)? - dense_utility(&minus, rewards)?) / (2.0 * h))
}

/// Dense `P` of a transition matrix built from a teleportation and dense
/// link rows, for tests that perturb matrices entrywise.
pub fn dense_from_link_rows(teleport: &Teleportation, s: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let a = teleport.damping();
    s.iter()
        .map(|row| {
            row.iter()
                .zip(teleport.zapping())
                .map(|(x, z)| a * x + (1.0 - a) * z)
                .collect()
        })
        .collect()
}

/// Vertices of the polyhedron described by a facet system, by brute force
/// over subsets of tight inequalities. Only meant for small systems.
pub fn facet_vertices(fs: &FacetSystem, max_dim: usize) -> Result<Vec<Vec<f64>>, OracleError> {
    let n = fs.n;
    let dense = |coeffs: &[(usize, f64)], sign: f64| {
        let mut row = vec![0.0; n];
        for &(j, a) in coeffs {
            row[j] = sign * a;
        }
        row
    };
    let (mut eq_a, mut eq_b, mut ineq_a, mut ineq_b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for f in &fs.facets {
        match f.relation {
            Relation::Eq => {
                eq_a.push(dense(&f.coeffs, 1.0));
                eq_b.push(f.bound);
            }
            Relation::Le => {
                ineq_a.push(dense(&f.coeffs, 1.0));
                ineq_b.push(f.bound);
            }
            Relation::Ge => {
                ineq_a.push(dense(&f.coeffs, -1.0));
                ineq_b.push(-f.bound);
            }
        }
    }
    // parametrize the affine hull x = x0 + N t
    let ae = DMatrix::from_fn(eq_a.len(), n, |i, j| eq_a[i][j]);
    let be = DVector::from_vec(eq_b);
    let gram = ae.transpose() * &ae;
    let eig = gram.clone().symmetric_eigen();
    let null: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k].abs() < 1e-10).collect();
    let d = null.len();
    if d > max_dim {
        return Err(OracleError::BudgetExceeded {
            needed: d,
            budget: max_dim,
        });
    }
    let basis = DMatrix::from_fn(n, d, |i, k| eig.eigenvectors[(i, null[k])]);
    let x0 = ae
        .clone()
        .svd(true, true)
        .solve(&be, 1e-12)
        .map_err(|_| OracleError::SingularSystem)?;
    if (&ae * &x0 - &be).amax() > 1e-9 {
        return Ok(Vec::new());
    }
    let m = ineq_a.len();
    let g = DMatrix::from_fn(m, n, |i, j| ineq_a[i][j]);
    let gn = &g * &basis;
    let bound = DVector::from_vec(ineq_b);
    let slack = &bound - &g * &x0;
    let feasible = |x: &DVector<f64>| (&g * x - &bound).iter().all(|&v| v <= 1e-9);

    let mut combos = Vec::new();
    combinations(m, d, &mut Vec::new(), 0, &mut combos);
    let mut out: Vec<Vec<f64>> = combos
        .par_iter()
        .filter_map(|rows| {
            let sub = DMatrix::from_fn(d, d, |r, c| gn[(rows[r], c)]);
            let rhs = DVector::from_fn(d, |r, _| slack[rows[r]]);
            let t = if d == 0 {
                DVector::zeros(0)
            } else {
                sub.lu().solve(&rhs)?
            };
            let x = &x0 + &basis * t;
            (x.iter().all(|v| v.is_finite()) && feasible(&x)).then(|| x.iter().copied().collect())
        })
        .collect();
    dedup_points(&mut out, 1e-9);
    Ok(out)
}

fn combinations(m: usize, d: usize, cur: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if cur.len() == d {
        out.push(cur.clone());
        return;
    }
    for k in start..m {
        if m - k < d - cur.len() {
            break;
        }
        cur.push(k);
        combinations(m, d, cur, k + 1, out);
        cur.pop();
    }
}

/// Sorts points lexicographically and drops near duplicates.
pub fn dedup_points(points: &mut Vec<Vec<f64>>, tol: f64) {
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                if (x - y).abs() <= tol {
                    std::cmp::Ordering::Equal
                } else {
                    x.total_cmp(y)
                }
            })
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    points.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InstanceBuilder;
    use crate::polytope::facets_discrete;

    fn two_page() -> WebGraphInstance {
        InstanceBuilder::new(2, 0.85)
            .facultative_links([(0, 0), (0, 1), (1, 0), (1, 1)])
            .rewards(LinkWeights::from_dense(&[vec![1.0, 10.0], vec![2.0, 2.0]]))
            .build()
            .unwrap()
    }

    #[test]
    fn action_enumeration() {
        assert_eq!(
            enumerate_discrete_actions(&[0], &[1], &[0.5, 0.5]).unwrap(),
            vec![vec![1.0, 0.0], vec![0.5, 0.5]]
        );
        assert_eq!(
            enumerate_discrete_actions(&[], &[0], &[0.4, 0.6]).unwrap(),
            vec![vec![0.4, 0.6], vec![1.0, 0.0]]
        );
        assert_eq!(
            enumerate_discrete_actions(&[0], &[1, 2], &[1.0 / 3.0; 3])
                .unwrap()
                .len(),
            4
        );
        let many: Vec<usize> = (0..25).collect();
        assert!(matches!(
            enumerate_discrete_actions(&[], &many, &[0.04; 25]),
            Err(OracleError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn exact_stationary_examples() {
        let pi = exact_stationary(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15);
        let pi = exact_stationary(&[vec![0.075, 0.925], vec![0.925, 0.075]]).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
        assert_eq!(
            exact_stationary(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            Err(OracleError::SingularSystem)
        );
    }

    #[test]
    fn closed_form_agrees_with_dense_solve() {
        let tp = Teleportation::new(0.85, vec![0.2, 0.3, 0.5], None);
        let s = [vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.2, 0.3, 0.5]];
        let dense = dense_from_link_rows(&tp, &s);
        let p = TransitionMatrix::from_dense_p(tp, &dense);
        let a = closed_form_stationary(&p).unwrap();
        let b = exact_stationary(&dense).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_two_page_example() {
        let inst = two_page();
        let bf = brute_force_optimum(&inst, EnumerationBudget::default()).unwrap();
        assert!((bf.value - 5.6625).abs() < 1e-12, "{}", bf.value);
        assert_eq!(bf.strategy.activated(0), Some(&[1][..]));
        assert_eq!(bf.strategy.activated(1), Some(&[0][..]));
        assert_eq!(bf.values.len(), 16);

        let zero = inst.with_rewards(LinkWeights::zeros(2));
        let bf = brute_force_optimum(&zero, EnumerationBudget::default()).unwrap();
        assert_eq!(bf.value, 0.0);
        // ties resolve to the all-inactive strategy
        assert_eq!(bf.strategy, Strategy::default_for(&zero));
    }

    #[test]
    fn budget_limits() {
        assert!(EnumerationBudget::new(25).is_err());
        let tight = EnumerationBudget::new(3).unwrap();
        assert!(matches!(
            brute_force_optimum(&two_page(), tight),
            Err(OracleError::BudgetExceeded { needed: 4, budget: 3 })
        ));
    }

    #[test]
    fn lexicographic_order() {
        // activation vectors (1,0) and (0,1): the latter is smaller
        assert!(lex_less(0b10, 0b01));
        assert!(!lex_less(0b01, 0b10));
        assert!(!lex_less(5, 5));
    }

    #[test]
    fn finite_difference_trivia() {
        let p = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let q = vec![vec![0.0; 2]; 2];
        let w = LinkWeights::from_dense(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(finite_diff_directional(&p, &w, &q, 1e-6).unwrap(), 0.0);
        let q = vec![vec![1.0, -1.0], vec![0.0, 0.0]];
        assert_eq!(
            finite_diff_directional(&p, &LinkWeights::zeros(2), &q, 1e-6).unwrap(),
            0.0
        );
        assert_eq!(finite_diff_directional(&p, &w, &q, 0.5), Err(OracleError::StepTooLarge));
    }

    #[test]
    fn vertices_of_small_systems() {
        let v = facet_vertices(&facets_discrete(&[0], &[1], &[1.0 / 3.0; 3], 3), 12).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().any(|x| (x[0] - 1.0).abs() < 1e-12));
        assert!(v
            .iter()
            .any(|x| (x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12));

        let v = facet_vertices(&facets_discrete(&[], &[0], &[0.4, 0.6], 2), 12).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v
            .iter()
            .any(|x| (x[0] - 0.4).abs() < 1e-12 && (x[1] - 0.6).abs() < 1e-12));
    }
}
