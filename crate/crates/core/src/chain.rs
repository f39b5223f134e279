//! Markov chain numerics: stationary distribution, occupation measures,
//! utilities, mean reward before teleportation, and the utility gradient.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{LinkRow, LinkWeights, Teleportation, TransitionMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("page {row} has zero visit frequency")]
    ZeroRow { row: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded {
        iterations: usize,
        residual: f64,
        /// Last iterate.
        best: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// L1 norm of the last iteration change. It bounds `|pi - pi P|` in
    /// every norm.
    pub residual: f64,
    pub iterations: usize,
}

/// Power iteration `x <- x P` from `x = z`, stopping once the L1 change is
/// at most `tol`.
pub fn stationary(p: &TransitionMatrix, tol: f64, max_iter: usize) -> Result<StationaryDistribution, ChainError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut x = p.teleport().zapping().to_vec();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut y = p.left_mul_p(&x);
        let total: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= total);
        residual = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = y;
        if residual <= tol {
            return Ok(StationaryDistribution {
                pi: x,
                residual,
                iterations: it,
            });
        }
    }
    Err(ChainError::MaxIterExceeded {
        iterations: max_iter,
        residual,
        best: x,
    })
}

/// Stationary measure over transitions, `rho_ij = pi_i P_ij`.
// measures are few and short-lived, so the unboxed variant costs nothing
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum OccupationMeasure {
    /// Kept as the pair `(pi, P)`; entries are formed on demand.
    Factored { pi: Vec<f64>, transition: TransitionMatrix },
    /// Sorted sparse rows; unlisted entries are zero.
    Explicit { rows: Vec<Vec<(usize, f64)>> },
}

pub fn occupation(pi: &StationaryDistribution, p: &TransitionMatrix) -> OccupationMeasure {
    OccupationMeasure::Factored {
        pi: pi.pi.clone(),
        transition: p.clone(),
    }
}

impl OccupationMeasure {
    pub fn from_dense(rho: &[Vec<f64>]) -> Self {
        Self::Explicit {
            rows: rho
                .iter()
                .map(|row| row.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect())
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Factored { pi, .. } => pi.len(),
            Self::Explicit { rows } => rows.len(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Factored { pi, transition } => pi[i] * transition.p_entry(i, j),
            Self::Explicit { rows } => rows[i].binary_search_by_key(&j, |e| e.0).map_or(0.0, |k| rows[i][k].1),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        match self {
            Self::Factored { pi, transition } => (0..pi.len())
                .map(|i| pi[i] * (transition.damping() * transition.s_row_sum(i) + 1.0 - transition.damping()))
                .collect(),
            Self::Explicit { rows } => rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect(),
        }
    }

    pub fn col_sums(&self) -> Vec<f64> {
        match self {
            Self::Factored { pi, transition } => transition.left_mul_p(pi),
            Self::Explicit { rows } => {
                let mut out = vec![0.0; rows.len()];
                for row in rows {
                    for &(j, v) in row {
                        out[j] += v;
                    }
                }
                out
            }
        }
    }

    pub fn total(&self) -> f64 {
        self.row_sums().iter().sum()
    }

    /// Largest `|sum_j rho_ij - sum_k rho_ki|`.
    pub fn flow_imbalance(&self) -> f64 {
        self.row_sums()
            .iter()
            .zip(self.col_sums())
            .fold(0.0, |m, (r, c)| m.max((r - c).abs()))
    }

    /// `<w, rho> = sum_ij rho_ij w_ij`.
    pub fn inner(&self, w: &LinkWeights) -> f64 {
        match self {
            Self::Factored { pi, transition } => {
                let rbar = transition.mean_rewards(w);
                pi.iter().zip(&rbar).map(|(p, r)| p * r).sum()
            }
            Self::Explicit { rows } => rows.iter().enumerate().map(|(i, row)| w.row_dot_sparse(i, row)).sum(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        (0..n).map(|i| (0..n).map(|j| self.entry(i, j)).collect()).collect()
    }
}

/// Inverse of [`occupation`]: `pi_i = sum_j rho_ij`, `P_ij = rho_ij / pi_i`.
///
/// Explicit measures are recovered as dense rows, which is meant for small
/// instances.
pub fn recover(
    rho: &OccupationMeasure,
    teleport: &Teleportation,
) -> Result<(StationaryDistribution, TransitionMatrix), ChainError> {
    let sums = rho.row_sums();
    if let Some(row) = sums.iter().position(|&s| s <= 0.0) {
        return Err(ChainError::ZeroRow { row });
    }
    let residual = rho.flow_imbalance();
    let p = match rho {
        OccupationMeasure::Factored { transition, .. } => transition.clone(),
        OccupationMeasure::Explicit { rows } => {
            let n = rows.len();
            let dense: Vec<Vec<f64>> = rows
                .iter()
                .zip(&sums)
                .map(|(row, s)| {
                    let mut out = vec![0.0; n];
                    for &(j, v) in row {
                        out[j] = v / s;
                    }
                    out
                })
                .collect();
            TransitionMatrix::from_dense_p(teleport.clone(), &dense)
        }
    };
    Ok((
        StationaryDistribution {
            pi: sums,
            residual,
            iterations: 0,
        },
        p,
    ))
}

/// Convex combination `sum_t mu_t rho_t` of factored measures sharing the
/// same teleportation, recovered as a stationary pair. Link rows are merged
/// sparsely, so the result stays cheap on large graphs.
pub fn recover_mixture(
    parts: &[(f64, &[f64], &TransitionMatrix)],
) -> Result<(StationaryDistribution, TransitionMatrix), ChainError> {
    let first = parts.first().expect("at least one measure").2;
    let n = first.n();
    let pi: Vec<f64> = (0..n).map(|i| parts.iter().map(|(mu, p, _)| mu * p[i]).sum()).collect();
    if let Some(row) = pi.iter().position(|&s| s <= 0.0) {
        return Err(ChainError::ZeroRow { row });
    }
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut teleport_weight = 0.0;
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for &(mu, p, t) in parts {
                let c = mu * p[i] / pi[i];
                if c == 0.0 {
                    continue;
                }
                teleport_weight += c * t.teleport_weight(i);
                let (cols, vals) = t.link_entries(i);
                entries.extend(cols.iter().zip(vals).map(|(&j, &s)| (j, c * s)));
            }
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (j, v) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            LinkRow {
                teleport_weight,
                entries: merged,
            }
        })
        .collect();
    let p = TransitionMatrix::from_rows(first.teleport().clone(), rows);
    let mix = OccupationMeasure::Factored {
        pi: pi.clone(),
        transition: p.clone(),
    };
    Ok((
        StationaryDistribution {
            residual: mix.flow_imbalance(),
            pi,
            iterations: 0,
        },
        p,
    ))
}

/// Total reward `sum_ij rho_ij r_ij`.
pub fn utility(rho: &OccupationMeasure, rewards: &LinkWeights) -> f64 {
    rho.inner(rewards)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanRewardVector {
    pub v: Vec<f64>,
    /// One-step expected rewards `rbar_i = sum_j P_ij r_ij`.
    pub r_bar: Vec<f64>,
    /// Sup norm of the last iteration change.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `v = rbar + alpha S v` by fixed-point iteration. The returned `v`
/// is within `tol` of the solution in sup norm.
pub fn mean_reward_before_teleport(
    p: &TransitionMatrix,
    rewards: &LinkWeights,
    tol: f64,
    max_iter: usize,
) -> Result<MeanRewardVector, ChainError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let a = p.damping();
    let r_bar = p.mean_rewards(rewards);
    let stop = tol * (1.0 - a) / a;
    let mut v = r_bar.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let sv = p.right_mul_s(&v);
        let next: Vec<f64> = r_bar.iter().zip(&sv).map(|(r, s)| r + a * s).collect();
        residual = next.iter().zip(&v).fold(0.0, |m, (x, y)| m.max((x - y).abs()));
        v = next;
        if residual <= stop {
            return Ok(MeanRewardVector {
                v,
                r_bar,
                residual,
                iterations: it,
            });
        }
    }
    Err(ChainError::MaxIterExceeded {
        iterations: max_iter,
        residual,
        best: v,
    })
}

/// Rewards equivalent to paying `r'_ij` only when the surfer follows the
/// link: `r_ij = r'_ij - (1 - alpha) sum_l r'_il z_l`.
pub fn reward_transform(follow_rewards: &LinkWeights, zapping: &[f64], damping: f64) -> LinkWeights {
    let shift: Vec<f64> = (0..follow_rewards.len())
        .map(|i| (1.0 - damping) * follow_rewards.row_dot_dense(i, zapping))
        .collect();
    follow_rewards.row_shifted(&shift)
}

/// Error bound on mean rewards computed on a crawl truncated at distance
/// `radius` from the frontier: `alpha^(R+1) * 2 / (1 - alpha) * |rbar|_inf`.
pub fn truncation_error_bound(damping: f64, radius: u32, rbar_sup: f64) -> f64 {
    damping.powi(radius as i32 + 1) * 2.0 / (1.0 - damping) * rbar_sup
}

/// Derivative of the utility with respect to the transition matrix,
/// `G_ij = pi_i (v_j + r_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityGradient {
    pub pi: Vec<f64>,
    pub v: Vec<f64>,
    rewards: LinkWeights,
}

impl UtilityGradient {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.pi[i] * (self.v[j] + self.rewards.get(i, j))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.pi.len();
        (0..n).map(|i| (0..n).map(|j| self.entry(i, j)).collect()).collect()
    }

    /// `<G, Q>` for a dense direction `Q`.
    pub fn directional(&self, q: &[Vec<f64>]) -> f64 {
        q.iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, x)| x * self.entry(i, j)).sum::<f64>())
            .sum()
    }
}

/// Utility gradient at `P`, with `pi` and `v` solved close to machine
/// precision.
pub fn utility_gradient(p: &TransitionMatrix, rewards: &LinkWeights) -> Result<UtilityGradient, ChainError> {
    let a = p.damping();
    let budget = ((1e-16f64).ln() / a.ln()).ceil() as usize + 100;
    let pi = stationary(p, 1e-14, budget)?.pi;
    let scale = rewards.sup_norm().max(1.0) / (1.0 - a);
    let v = mean_reward_before_teleport(p, rewards, 1e-13 * scale, budget)?.v;
    Ok(UtilityGradient {
        pi,
        v,
        rewards: rewards.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_page_optimum() -> TransitionMatrix {
        TransitionMatrix::from_dense_p(
            Teleportation::uniform(2, 0.85),
            &[vec![0.075, 0.925], vec![0.925, 0.075]],
        )
    }

    fn example_rewards() -> LinkWeights {
        LinkWeights::from_dense(&[vec![1.0, 10.0], vec![2.0, 2.0]])
    }

    #[test]
    fn stationary_examples() {
        let p = TransitionMatrix::from_dense_p(Teleportation::uniform(2, 0.85), &[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let s = stationary(&p, 1e-12, 1000).unwrap();
        assert!((s.pi[0] - 0.5).abs() < 1e-12);

        let single = TransitionMatrix::from_dense_p(Teleportation::uniform(1, 0.85), &[vec![1.0]]);
        assert_eq!(stationary(&single, 1e-12, 10).unwrap().pi, vec![1.0]);

        let s = stationary(&two_page_optimum(), 1e-13, 1000).unwrap();
        assert!((s.pi[0] - 0.5).abs() < 1e-12 && (s.pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_reports_exhausted_budget() {
        let p = TransitionMatrix::from_dense_p(
            Teleportation::new(0.85, vec![0.9, 0.1], None),
            &[vec![0.1, 0.9], vec![0.9, 0.1]],
        );
        match stationary(&p, 1e-15, 2) {
            Err(ChainError::MaxIterExceeded { iterations, best, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(best.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn occupation_and_utility_of_example() {
        let p = two_page_optimum();
        let pi = stationary(&p, 1e-14, 1000).unwrap();
        let rho = occupation(&pi, &p);
        let dense = rho.to_dense();
        let want = [[0.0375, 0.4625], [0.4625, 0.0375]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((dense[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
        assert!(rho.flow_imbalance() < 1e-10);
        assert!((utility(&rho, &example_rewards()) - 5.6625).abs() < 1e-10);
        assert_eq!(utility(&rho, &LinkWeights::zeros(2)), 0.0);
    }

    #[test]
    fn total_pagerank_as_utility() {
        let p = two_page_optimum();
        let rho = occupation(&stationary(&p, 1e-14, 1000).unwrap(), &p);
        let u = utility(&rho, &LinkWeights::per_page(vec![0.0, 1.0]));
        assert!((u - 0.5).abs() < 1e-12);
    }

    #[test]
    fn recover_examples() {
        let tp = Teleportation::uniform(2, 0.85);
        let rho = OccupationMeasure::from_dense(&[vec![0.0375, 0.4625], vec![0.4625, 0.0375]]);
        let (pi, p) = recover(&rho, &tp).unwrap();
        assert_eq!(pi.pi, vec![0.5, 0.5]);
        assert!((p.p_entry(0, 1) - 0.925).abs() < 1e-12);
        assert!((p.p_entry(1, 1) - 0.075).abs() < 1e-12);
        assert!(p.s_entry(0, 0).abs() < 1e-12);

        let flat = OccupationMeasure::from_dense(&[vec![0.25, 0.25], vec![0.25, 0.25]]);
        let (pi, p) = recover(&flat, &tp).unwrap();
        assert_eq!(pi.pi, vec![0.5, 0.5]);
        assert!((p.p_entry(1, 0) - 0.5).abs() < 1e-12);

        let zero = OccupationMeasure::from_dense(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(recover(&zero, &tp).unwrap_err(), ChainError::ZeroRow { row: 1 });
    }

    #[test]
    fn mixture_of_measures_is_stationary() {
        let tp = Teleportation::uniform(3, 0.85);
        let a = TransitionMatrix::from_rows(
            tp.clone(),
            vec![LinkRow::uniform(&[1]), LinkRow::uniform(&[2]), LinkRow::dangling()],
        );
        let b = TransitionMatrix::from_rows(
            tp,
            vec![
                LinkRow::uniform(&[1, 2]),
                LinkRow::uniform(&[0]),
                LinkRow::uniform(&[0]),
            ],
        );
        let pa = stationary(&a, 1e-14, 1000).unwrap().pi;
        let pb = stationary(&b, 1e-14, 1000).unwrap().pi;
        let (pi, p) = recover_mixture(&[(0.3, &pa, &a), (0.7, &pb, &b)]).unwrap();
        let again = stationary(&p, 1e-14, 1000).unwrap().pi;
        for i in 0..3 {
            assert!((pi.pi[i] - again[i]).abs() < 1e-12);
            assert!((pi.pi[i] - (0.3 * pa[i] + 0.7 * pb[i])).abs() < 1e-15);
        }
        let w = LinkWeights::from_dense(&[vec![1.0, 2.0, 3.0], vec![0.0, -1.0, 4.0], vec![2.0, 2.0, 0.5]]);
        let mixed = OccupationMeasure::Factored {
            pi: pi.pi,
            transition: p,
        };
        let ua = occupation(
            &StationaryDistribution {
                pi: pa,
                residual: 0.0,
                iterations: 0,
            },
            &a,
        )
        .inner(&w);
        let ub = occupation(
            &StationaryDistribution {
                pi: pb,
                residual: 0.0,
                iterations: 0,
            },
            &b,
        )
        .inner(&w);
        assert!((mixed.inner(&w) - (0.3 * ua + 0.7 * ub)).abs() < 1e-12);
    }

    #[test]
    fn mean_reward_examples() {
        let p = two_page_optimum();
        let m = mean_reward_before_teleport(&p, &example_rewards(), 1e-10, 10_000).unwrap();
        assert!((m.r_bar[0] - 9.325).abs() < 1e-12 && (m.r_bar[1] - 2.0).abs() < 1e-12);
        assert!((m.v[0] - 39.73).abs() < 0.005, "{:?}", m.v);
        assert!((m.v[1] - 35.77).abs() < 0.005, "{:?}", m.v);

        let zero = mean_reward_before_teleport(&p, &LinkWeights::zeros(2), 1e-10, 10).unwrap();
        assert_eq!(zero.v, vec![0.0, 0.0]);

        let single = TransitionMatrix::from_dense_p(Teleportation::uniform(1, 0.85), &[vec![1.0]]);
        let m = mean_reward_before_teleport(&single, &LinkWeights::per_page(vec![1.0]), 1e-10, 10_000).unwrap();
        assert!((m.v[0] - 1.0 / 0.15).abs() < 1e-10);
    }

    #[test]
    fn reward_transform_examples() {
        let r = reward_transform(&example_rewards(), &[0.5, 0.5], 0.85);
        let want = [[0.175, 9.175], [1.7, 1.7]];
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                assert!((r.get(i, j) - w).abs() < 1e-12);
            }
        }
        let c = reward_transform(&LinkWeights::per_page(vec![2.0; 3]), &[0.2, 0.3, 0.5], 0.85);
        assert!((c.get(1, 2) - 1.7).abs() < 1e-12);
        assert_eq!(
            reward_transform(&LinkWeights::zeros(2), &[0.5, 0.5], 0.85),
            LinkWeights::zeros(2)
        );
    }

    #[test]
    fn truncation_bound_examples() {
        assert_eq!(truncation_error_bound(0.85, 3, 0.0), 0.0);
        assert!((truncation_error_bound(0.85, 1, 1.0) - 0.7225 * 2.0 / 0.15).abs() < 1e-12);
        let far = truncation_error_bound(0.85, 20, 1.0);
        assert!((far - 0.85f64.powi(21) * 2.0 / 0.15).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_example() {
        let g = utility_gradient(&two_page_optimum(), &example_rewards()).unwrap();
        assert!((g.entry(0, 1) - 0.5 * (g.v[1] + 10.0)).abs() < 1e-12);
        assert!((g.entry(0, 1) - 22.89).abs() < 0.01);
        let zero = utility_gradient(&two_page_optimum(), &LinkWeights::zeros(2)).unwrap();
        assert!(zero.to_dense().iter().flatten().all(|&x| x == 0.0));
    }
}
