use std::sync::Arc;

use super::{LinkWeights, ModelError};

const SUM_TOL: f64 = 1e-9;

/// Damping factor together with the teleportation vectors.
///
/// `zapping` is the restart distribution `z` used at every step with
/// probability `1 - damping`; `dangling` is the distribution used by pages
/// without any outlink.
#[derive(Debug, Clone, PartialEq)]
pub struct Teleportation {
    damping: f64,
    zapping: Arc<[f64]>,
    dangling: Arc<[f64]>,
}

impl Teleportation {
    /// Unchecked constructor; [`InstanceBuilder::build`] validates.
    pub fn new(damping: f64, zapping: Vec<f64>, dangling: Option<Vec<f64>>) -> Self {
        let zapping: Arc<[f64]> = zapping.into();
        let dangling = match dangling {
            Some(d) => d.into(),
            None => zapping.clone(),
        };
        Self {
            damping,
            zapping,
            dangling,
        }
    }

    pub fn uniform(n: usize, damping: f64) -> Self {
        Self::new(damping, vec![1.0 / n as f64; n], None)
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn zapping(&self) -> &[f64] {
        &self.zapping
    }

    pub fn dangling(&self) -> &[f64] {
        &self.dangling
    }

    pub fn len(&self) -> usize {
        self.zapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zapping.is_empty()
    }

    fn validate(&self) -> Result<(), ModelError> {
        let a = self.damping;
        if !(a > 0.0 && a < 1.0) {
            return Err(ModelError::validation("damping must lie in (0,1)"));
        }
        if self.zapping.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(ModelError::validation("teleport entries must be positive"));
        }
        if (self.zapping.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
            return Err(ModelError::validation("teleport must sum to 1"));
        }
        if self.dangling.len() != self.zapping.len() {
            return Err(ModelError::validation("dangling teleport must have one entry per page"));
        }
        if self.dangling.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(ModelError::validation("dangling teleport entries must be nonnegative"));
        }
        if (self.dangling.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
            return Err(ModelError::validation("dangling teleport must sum to 1"));
        }
        Ok(())
    }
}

/// Designer template for a page: every transition keeps at least a
/// `1 - mu` share of the template row `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub q: Vec<f64>,
    pub mu: f64,
    /// Pages whose weight is capped at the lower bound (no extra mass).
    pub banned: Vec<usize>,
}

impl Skeleton {
    /// Sparse link-space lower bounds `(1 - mu) q_j`, sorted by page.
    pub fn lower_bounds(&self) -> Vec<(usize, f64)> {
        self.q
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v > 0.0)
            .map(|(j, &v)| (j, (1.0 - self.mu) * v))
            .collect()
    }
}

/// Ergodic linear constraint `sum_ij rho_ij cost_ij <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConstraint {
    pub cost: LinkWeights,
    pub bound: f64,
}

/// How the outlinks of one page may be chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageControl {
    /// Frozen at uniform on its obligatory links (or the dangling row).
    Uncontrolled,
    /// Chooses a subset of its facultative links.
    Discrete,
    /// Chooses any row satisfying its skeleton bounds.
    Skeleton,
}

/// A full PageRank optimization problem.
#[derive(Debug, Clone)]
pub struct WebGraphInstance {
    teleport: Teleportation,
    obligatory: Vec<Vec<usize>>,
    facultative: Vec<Vec<usize>>,
    rewards: LinkWeights,
    skeleton: Vec<Option<Skeleton>>,
    coupling: Vec<CouplingConstraint>,
}

impl WebGraphInstance {
    pub fn num_pages(&self) -> usize {
        self.teleport.len()
    }

    pub fn teleport(&self) -> &Teleportation {
        &self.teleport
    }

    pub fn damping(&self) -> f64 {
        self.teleport.damping
    }

    /// Sorted obligatory targets of page `i`.
    pub fn obligatory(&self, i: usize) -> &[usize] {
        &self.obligatory[i]
    }

    /// Sorted facultative targets of page `i`.
    pub fn facultative(&self, i: usize) -> &[usize] {
        &self.facultative[i]
    }

    pub fn rewards(&self) -> &LinkWeights {
        &self.rewards
    }

    pub fn skeleton(&self, i: usize) -> Option<&Skeleton> {
        self.skeleton[i].as_ref()
    }

    pub fn coupling(&self) -> &[CouplingConstraint] {
        &self.coupling
    }

    pub fn control(&self, i: usize) -> PageControl {
        if self.skeleton[i].is_some() {
            PageControl::Skeleton
        } else if !self.facultative[i].is_empty() {
            PageControl::Discrete
        } else {
            PageControl::Uncontrolled
        }
    }

    /// True when no page carries a skeleton record.
    pub fn is_discrete(&self) -> bool {
        self.skeleton.iter().all(Option::is_none)
    }

    pub fn num_obligatory(&self) -> usize {
        self.obligatory.iter().map(Vec::len).sum()
    }

    pub fn num_facultative(&self) -> usize {
        self.facultative.iter().map(Vec::len).sum()
    }

    pub fn num_skeleton(&self) -> usize {
        self.skeleton.iter().filter(|s| s.is_some()).count()
    }

    /// Same problem with a different reward matrix.
    pub fn with_rewards(&self, rewards: LinkWeights) -> Self {
        assert_eq!(rewards.len(), self.num_pages(), "reward dimension");
        Self {
            rewards,
            ..self.clone()
        }
    }

    /// Same problem with the coupling constraints replaced.
    pub fn with_coupling(&self, coupling: Vec<CouplingConstraint>) -> Self {
        Self {
            coupling,
            ..self.clone()
        }
    }

    /// Re-checks every invariant. Instances from [`InstanceBuilder`] always
    /// pass; this is exposed for callers holding modified copies.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.num_pages();
        if n == 0 {
            return Err(ModelError::validation("num_pages must be positive"));
        }
        self.teleport.validate()?;
        for i in 0..n {
            let (o, f) = (&self.obligatory[i], &self.facultative[i]);
            if o.iter().chain(f).any(|&j| j >= n) {
                return Err(ModelError::validation("link index out of range"));
            }
            if o.iter().any(|j| f.binary_search(j).is_ok()) {
                return Err(ModelError::validation("link classes must be disjoint"));
            }
        }
        if self.rewards.len() != n {
            return Err(ModelError::validation("rewards must have one row per page"));
        }
        if !weights_finite(&self.rewards, n) {
            return Err(ModelError::validation("rewards must be finite with in-range indices"));
        }
        for (i, sk) in self.skeleton.iter().enumerate() {
            let Some(sk) = sk else { continue };
            if !self.facultative[i].is_empty() {
                return Err(ModelError::validation(
                    "a page cannot carry both facultative links and a skeleton",
                ));
            }
            if sk.q.len() != n {
                return Err(ModelError::validation("skeleton q must have one entry per page"));
            }
            if sk.q.iter().any(|&v| !(v.is_finite() && v >= 0.0)) || (sk.q.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
                return Err(ModelError::validation("skeleton q must be stochastic"));
            }
            if !(0.0..=1.0).contains(&sk.mu) {
                return Err(ModelError::validation("skeleton mu must lie in [0,1]"));
            }
            if sk.banned.iter().any(|&j| j >= n) {
                return Err(ModelError::validation("link index out of range"));
            }
            if sk.mu > 0.0 && sk.banned.len() == n {
                return Err(ModelError::validation("skeleton leaves no admissible transition row"));
            }
        }
        for c in &self.coupling {
            if c.cost.len() != n || !weights_finite(&c.cost, n) || !c.bound.is_finite() {
                return Err(ModelError::validation(
                    "coupling constraints must be finite n x n costs with a finite bound",
                ));
            }
        }
        Ok(())
    }
}

fn weights_finite(w: &LinkWeights, n: usize) -> bool {
    w.base().iter().all(|v| v.is_finite())
        && (0..w.len()).all(|i| w.overrides(i).iter().all(|&(j, v)| j < n && v.is_finite()))
}

/// Incremental construction of a [`WebGraphInstance`]; `build` validates.
#[derive(Debug, Clone)]
pub struct InstanceBuilder {
    n: usize,
    damping: f64,
    zapping: Option<Vec<f64>>,
    dangling: Option<Vec<f64>>,
    obligatory: Vec<(usize, usize)>,
    facultative: Vec<(usize, usize)>,
    rewards: Option<LinkWeights>,
    skeleton: Vec<(usize, Skeleton)>,
    coupling: Vec<CouplingConstraint>,
}

impl InstanceBuilder {
    /// Starts an instance with uniform teleportation and zero rewards.
    pub fn new(num_pages: usize, damping: f64) -> Self {
        Self {
            n: num_pages,
            damping,
            zapping: None,
            dangling: None,
            obligatory: Vec::new(),
            facultative: Vec::new(),
            rewards: None,
            skeleton: Vec::new(),
            coupling: Vec::new(),
        }
    }

    pub fn teleport(mut self, z: Vec<f64>) -> Self {
        self.zapping = Some(z);
        self
    }

    pub fn dangling_teleport(mut self, z: Vec<f64>) -> Self {
        self.dangling = Some(z);
        self
    }

    pub fn obligatory(mut self, i: usize, j: usize) -> Self {
        self.obligatory.push((i, j));
        self
    }

    pub fn facultative(mut self, i: usize, j: usize) -> Self {
        self.facultative.push((i, j));
        self
    }

    pub fn obligatory_links(mut self, links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        self.obligatory.extend(links);
        self
    }

    pub fn facultative_links(mut self, links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        self.facultative.extend(links);
        self
    }

    pub fn rewards(mut self, rewards: LinkWeights) -> Self {
        self.rewards = Some(rewards);
        self
    }

    pub fn skeleton(mut self, page: usize, skeleton: Skeleton) -> Self {
        self.skeleton.push((page, skeleton));
        self
    }

    pub fn coupling(mut self, constraint: CouplingConstraint) -> Self {
        self.coupling.push(constraint);
        self
    }

    pub fn build(self) -> Result<WebGraphInstance, ModelError> {
        let n = self.n;
        if n == 0 {
            return Err(ModelError::validation("num_pages must be positive"));
        }
        let zapping = self.zapping.unwrap_or_else(|| vec![1.0 / n as f64; n]);
        if zapping.len() != n {
            return Err(ModelError::validation("teleport must have one entry per page"));
        }
        let teleport = Teleportation::new(self.damping, zapping, self.dangling);
        let obligatory = adjacency(n, &self.obligatory)?;
        let facultative = adjacency(n, &self.facultative)?;
        let mut skeleton = vec![None; n];
        for (page, sk) in self.skeleton {
            if page >= n {
                return Err(ModelError::validation("skeleton page out of range"));
            }
            if skeleton[page].is_some() {
                return Err(ModelError::validation("at most one skeleton per page"));
            }
            let mut sk = sk;
            sk.banned.sort_unstable();
            sk.banned.dedup();
            skeleton[page] = Some(sk);
        }
        let inst = WebGraphInstance {
            teleport,
            obligatory,
            facultative,
            rewards: self.rewards.unwrap_or_else(|| LinkWeights::zeros(n)),
            skeleton,
            coupling: self.coupling,
        };
        inst.validate()?;
        Ok(inst)
    }
}

fn adjacency(n: usize, links: &[(usize, usize)]) -> Result<Vec<Vec<usize>>, ModelError> {
    let mut rows = vec![Vec::new(); n];
    for &(i, j) in links {
        if i >= n || j >= n {
            return Err(ModelError::validation("link index out of range"));
        }
        rows[i].push(j);
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }
    Ok(rows)
}
