use rayon::prelude::*;

use super::{
    ContinuousRow, LinkWeights, ModelError, PageChoice, PageControl, Strategy, Teleportation, WebGraphInstance,
};
use crate::polytope::{apply_damping, facets_discrete, Separation};

/// Tolerance for continuous rows against their page constraints.
pub const ROW_TOL: f64 = 1e-9;

/// One row of the link matrix `S`: `teleport_weight * Z + entries`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkRow {
    pub teleport_weight: f64,
    /// Sorted `(j, S_ij)` entries on top of the teleport part.
    pub entries: Vec<(usize, f64)>,
}

impl LinkRow {
    pub fn uniform(support: &[usize]) -> Self {
        if support.is_empty() {
            return Self::dangling();
        }
        let p = 1.0 / support.len() as f64;
        Self {
            teleport_weight: 0.0,
            entries: support.iter().map(|&j| (j, p)).collect(),
        }
    }

    pub fn dangling() -> Self {
        Self {
            teleport_weight: 1.0,
            entries: Vec::new(),
        }
    }
}

/// Row-stochastic transition matrix `P = alpha S + (1 - alpha) e z`.
///
/// Only the link part `S` is stored, as sparse rows. A row may also carry a
/// multiple of the dangling vector `Z` (weight 1 for pages without outlinks);
/// neither that term nor the rank-one teleportation term is materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    teleport: Teleportation,
    teleport_weight: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    // transposed explicit part, for deterministic left products
    col_ptr: Vec<usize>,
    t_rows: Vec<usize>,
    t_vals: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(teleport: Teleportation, rows: Vec<LinkRow>) -> Self {
        let n = rows.len();
        assert_eq!(n, teleport.len(), "row count must match teleport length");
        let nnz = rows.iter().map(|r| r.entries.len()).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        let mut teleport_weight = Vec::with_capacity(n);
        let mut col_count = vec![0usize; n];
        row_ptr.push(0);
        for row in rows {
            teleport_weight.push(row.teleport_weight);
            for (j, v) in row.entries {
                cols.push(j);
                vals.push(v);
                col_count[j] += 1;
            }
            row_ptr.push(cols.len());
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        for c in &col_count {
            col_ptr.push(col_ptr.last().unwrap() + c);
        }
        let mut fill = col_ptr[..n].to_vec();
        let mut t_rows = vec![0; nnz];
        let mut t_vals = vec![0.0; nnz];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[k];
                t_rows[fill[j]] = i;
                t_vals[fill[j]] = vals[k];
                fill[j] += 1;
            }
        }
        Self {
            teleport,
            teleport_weight,
            row_ptr,
            cols,
            vals,
            col_ptr,
            t_rows,
            t_vals,
        }
    }

    /// Builds from a dense row-stochastic `P`, deriving `S = (P - (1 - alpha) e z) / alpha`.
    pub fn from_dense_p(teleport: Teleportation, p: &[Vec<f64>]) -> Self {
        let a = teleport.damping();
        let rows = p
            .iter()
            .map(|row| LinkRow {
                teleport_weight: 0.0,
                entries: row
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (j, (v - (1.0 - a) * teleport.zapping()[j]) / a))
                    .collect(),
            })
            .collect();
        Self::from_rows(teleport, rows)
    }

    pub fn n(&self) -> usize {
        self.teleport_weight.len()
    }

    pub fn teleport(&self) -> &Teleportation {
        &self.teleport
    }

    pub fn damping(&self) -> f64 {
        self.teleport.damping()
    }

    /// Weight of the dangling vector `Z` in row `i` of `S`.
    pub fn teleport_weight(&self, i: usize) -> f64 {
        self.teleport_weight[i]
    }

    /// True for rows built from a page without any outlink.
    pub fn is_dangling(&self, i: usize) -> bool {
        self.teleport_weight[i] == 1.0 && self.row_ptr[i] == self.row_ptr[i + 1]
    }

    /// Explicit `(cols, values)` part of row `i` of `S`.
    pub fn link_entries(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn s_entry(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.link_entries(i);
        let explicit = cols.binary_search(&j).map_or(0.0, |k| vals[k]);
        explicit + self.teleport_weight[i] * self.teleport.dangling()[j]
    }

    pub fn p_entry(&self, i: usize, j: usize) -> f64 {
        let a = self.damping();
        a * self.s_entry(i, j) + (1.0 - a) * self.teleport.zapping()[j]
    }

    /// Row `i` of `S` as a dense vector.
    pub fn s_row_dense(&self, i: usize) -> Vec<f64> {
        let w = self.teleport_weight[i];
        let mut row: Vec<f64> = self.teleport.dangling().iter().map(|z| w * z).collect();
        let (cols, vals) = self.link_entries(i);
        for (&j, &v) in cols.iter().zip(vals) {
            row[j] += v;
        }
        row
    }

    pub fn to_dense_s(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.s_row_dense(i)).collect()
    }

    pub fn to_dense_p(&self) -> Vec<Vec<f64>> {
        let a = self.damping();
        let z = self.teleport.zapping();
        (0..self.n())
            .map(|i| {
                self.s_row_dense(i)
                    .into_iter()
                    .zip(z)
                    .map(|(s, zj)| a * s + (1.0 - a) * zj)
                    .collect()
            })
            .collect()
    }

    /// Sum of row `i` of `S`.
    pub fn s_row_sum(&self, i: usize) -> f64 {
        let (_, vals) = self.link_entries(i);
        self.teleport_weight[i] * self.teleport.dangling().iter().sum::<f64>() + vals.iter().sum::<f64>()
    }

    /// `x S` for a row vector `x`.
    pub fn left_mul_s(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let dangling_mass: f64 = x
            .iter()
            .zip(&self.teleport_weight)
            .filter(|(_, &w)| w != 0.0)
            .map(|(xi, w)| xi * w)
            .sum();
        let zd = self.teleport.dangling();
        (0..n)
            .into_par_iter()
            .map(|j| {
                let mut acc = 0.0;
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    acc += x[self.t_rows[k]] * self.t_vals[k];
                }
                acc + dangling_mass * zd[j]
            })
            .collect()
    }

    /// `x P` for a row vector `x`.
    pub fn left_mul_p(&self, x: &[f64]) -> Vec<f64> {
        let a = self.damping();
        let total: f64 = x.iter().sum();
        let z = self.teleport.zapping();
        let mut y = self.left_mul_s(x);
        for (yj, zj) in y.iter_mut().zip(z) {
            *yj = a * *yj + (1.0 - a) * total * zj;
        }
        y
    }

    /// `S v` for a column vector `v`.
    pub fn right_mul_s(&self, v: &[f64]) -> Vec<f64> {
        let zv: f64 = self.teleport.dangling().iter().zip(v).map(|(z, x)| z * x).sum();
        (0..self.n())
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.link_entries(i);
                let mut acc = self.teleport_weight[i] * zv;
                for (&j, &s) in cols.iter().zip(vals) {
                    acc += s * v[j];
                }
                acc
            })
            .collect()
    }

    /// Expected one-step reward `rbar_i = sum_j P_ij r_ij` for every page.
    pub fn mean_rewards(&self, rewards: &LinkWeights) -> Vec<f64> {
        let a = self.damping();
        let z = self.teleport.zapping();
        let zd = self.teleport.dangling();
        (0..self.n())
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.link_entries(i);
                let mut link = 0.0;
                let mut k = 0;
                rewards.for_each_in_row(i, cols, |_, r| {
                    link += vals[k] * r;
                    k += 1;
                });
                let w = self.teleport_weight[i];
                if w != 0.0 {
                    link += w * distribution_dot(rewards, i, zd);
                }
                a * link + (1.0 - a) * distribution_dot(rewards, i, z)
            })
            .collect()
    }
}

/// `sum_j x_j w_ij` for a probability vector `x`, in `O(overrides)`.
pub(crate) fn distribution_dot(w: &LinkWeights, i: usize, x: &[f64]) -> f64 {
    let b = w.base()[i];
    b + w.overrides(i).iter().map(|&(j, v)| x[j] * (v - b)).sum::<f64>()
}

/// Materializes the transition matrix a strategy induces on an instance.
pub fn build_transition(instance: &WebGraphInstance, strategy: &Strategy) -> Result<TransitionMatrix, ModelError> {
    let n = instance.num_pages();
    if strategy.len() != n {
        return Err(ModelError::invalid_strategy(format!(
            "strategy covers {} pages, instance has {n}",
            strategy.len()
        )));
    }
    let rows = (0..n)
        .into_par_iter()
        .map(|i| link_row(instance, i, strategy.page(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TransitionMatrix::from_rows(instance.teleport().clone(), rows))
}

/// Continuous strategy reproducing the rows of `p` on controlled pages.
/// Uncontrolled pages keep their default row.
pub fn strategy_from_transition(instance: &WebGraphInstance, p: &TransitionMatrix) -> Strategy {
    let tp = instance.teleport();
    let (a, z, zd) = (tp.damping(), tp.zapping(), tp.dangling());
    let pages = (0..instance.num_pages())
        .map(|i| {
            if instance.control(i) == PageControl::Uncontrolled {
                return PageChoice::Uncontrolled;
            }
            let (cols, vals) = p.link_entries(i);
            let tw = p.teleport_weight(i);
            let mut row: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
            if tw > 0.0 {
                row.extend(zd.iter().enumerate().filter(|e| *e.1 > 0.0).map(|(j, &v)| (j, tw * v)));
            }
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            PageChoice::Continuous(ContinuousRow::from_link_row(&merged, a, z))
        })
        .collect();
    Strategy::new(pages)
}

fn link_row(inst: &WebGraphInstance, i: usize, choice: &PageChoice) -> Result<LinkRow, ModelError> {
    let control = inst.control(i);
    match (choice, control) {
        (PageChoice::Uncontrolled, PageControl::Skeleton) => {
            let sk = inst.skeleton(i).expect("skeleton page");
            let row = LinkRow {
                teleport_weight: 0.0,
                entries: sk.q.iter().copied().enumerate().filter(|&(_, v)| v > 0.0).collect(),
            };
            check_skeleton_row(inst, i, &row.entries)?;
            Ok(row)
        }
        (PageChoice::Uncontrolled, _) => Ok(LinkRow::uniform(inst.obligatory(i))),
        (PageChoice::Discrete(_), PageControl::Skeleton) => Err(ModelError::invalid_strategy(format!(
            "page {i} has a skeleton and needs a continuous row"
        ))),
        (PageChoice::Discrete(active), _) => {
            let fac = inst.facultative(i);
            if let Some(j) = active.iter().find(|j| fac.binary_search(j).is_err()) {
                return Err(ModelError::invalid_strategy(format!(
                    "page {i} activates {j}, which is not a facultative link"
                )));
            }
            let mut support: Vec<usize> = inst.obligatory(i).iter().chain(active).copied().collect();
            support.sort_unstable();
            Ok(LinkRow::uniform(&support))
        }
        (PageChoice::Continuous(row), control) => continuous_row(inst, i, row, control),
    }
}

fn continuous_row(
    inst: &WebGraphInstance,
    i: usize,
    row: &ContinuousRow,
    control: PageControl,
) -> Result<LinkRow, ModelError> {
    let tp = inst.teleport();
    let (a, z) = (tp.damping(), tp.zapping());
    let n = inst.num_pages();
    if row.entries().iter().any(|&(j, v)| j >= n || !v.is_finite()) {
        return Err(ModelError::invalid_strategy(format!(
            "page {i}: row entries must be finite with in-range pages"
        )));
    }
    let listed_floor: f64 = row.entries().iter().map(|&(j, _)| (1.0 - a) * z[j]).sum();
    let total = row.entries().iter().map(|e| e.1).sum::<f64>() + (1.0 - a) - listed_floor;
    if (total - 1.0).abs() > ROW_TOL {
        return Err(ModelError::invalid_strategy(format!(
            "page {i}: row is not stochastic (sums to {total})"
        )));
    }
    let entries = row.link_entries(a, z);
    match control {
        PageControl::Skeleton => check_skeleton_row(inst, i, &entries)?,
        PageControl::Discrete => {
            let facets = facets_discrete(inst.obligatory(i), inst.facultative(i), tp.dangling(), n);
            let damped = apply_damping(&facets, a, z);
            if let Separation::Violated { facet, violation } = damped.separate_within(&row.to_dense(a, z), ROW_TOL) {
                return Err(ModelError::invalid_strategy(format!(
                    "page {i}: row violates {facet} by {violation:e}"
                )));
            }
        }
        PageControl::Uncontrolled => {
            let fixed = LinkRow::uniform(inst.obligatory(i));
            let mut dense = vec![0.0; n];
            for &(j, s) in &entries {
                dense[j] = s;
            }
            let mut want: Vec<f64> = tp.dangling().iter().map(|zj| fixed.teleport_weight * zj).collect();
            for &(j, s) in &fixed.entries {
                want[j] += s;
            }
            if dense.iter().zip(&want).any(|(x, y)| (x - y).abs() > ROW_TOL) {
                return Err(ModelError::invalid_strategy(format!(
                    "page {i} is not controlled and must keep its default row"
                )));
            }
        }
    }
    Ok(LinkRow {
        teleport_weight: 0.0,
        entries,
    })
}

fn check_skeleton_row(inst: &WebGraphInstance, i: usize, entries: &[(usize, f64)]) -> Result<(), ModelError> {
    let sk = inst.skeleton(i).expect("skeleton page");
    let value = |j: usize| entries.binary_search_by_key(&j, |e| e.0).map_or(0.0, |k| entries[k].1);
    if let Some(&(j, v)) = entries.iter().find(|e| e.1 < -ROW_TOL) {
        return Err(ModelError::invalid_strategy(format!(
            "page {i}: link weight {v:e} on page {j} is negative"
        )));
    }
    for (j, lo) in sk.lower_bounds() {
        if value(j) < lo - ROW_TOL {
            return Err(ModelError::invalid_strategy(format!(
                "page {i}: link weight on page {j} is below its skeleton bound"
            )));
        }
    }
    for &j in &sk.banned {
        let lo = (1.0 - sk.mu) * sk.q[j];
        if value(j) > lo + ROW_TOL {
            return Err(ModelError::invalid_strategy(format!(
                "page {i}: banned page {j} receives extra weight"
            )));
        }
    }
    Ok(())
}
