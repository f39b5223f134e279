//! Facet descriptions of per-page action sets, a separation oracle, and
//! exact linear maximization over each set.
//!
//! The convex hull of the uniform transition rows a page can realize has a
//! description with one or two constraints per coordinate even though it
//! has exponentially many vertices. With at least one obligatory link it is
//! a projectively transformed hypercube; without any, it is a simplex whose
//! shape depends on where the dangling distribution puts its mass.

use std::fmt;

use thiserror::Error;

/// Absolute tolerance for membership and separation.
pub const SEPARATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolytopeError {
    #[error("action set is empty: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

/// Linear constraint `coeffs . x (relation) bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Sorted sparse coefficients.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub bound: f64,
}

impl Facet {
    fn new(mut coeffs: Vec<(usize, f64)>, relation: Relation, bound: f64) -> Self {
        coeffs.sort_by_key(|c| c.0);
        Self {
            coeffs,
            relation,
            bound,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the constraint (nonpositive when met).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.eval(x);
        match self.relation {
            Relation::Le => lhs - self.bound,
            Relation::Ge => self.bound - lhs,
            Relation::Eq => (lhs - self.bound).abs(),
        }
    }

    fn is_simplex(&self, n: usize) -> bool {
        self.coeffs.len() == n && self.coeffs.iter().all(|c| c.1 == 1.0)
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.relation {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        };
        if self.coeffs.len() >= 2 && self.coeffs.iter().all(|c| c.1 == 1.0) {
            return write!(f, "sum(x) {rel} {}", self.bound);
        }
        for (k, &(j, a)) in self.coeffs.iter().enumerate() {
            let sign = if a < 0.0 {
                "-"
            } else if k > 0 {
                "+"
            } else {
                ""
            };
            let sep = if k > 0 { " " } else { "" };
            let mag = a.abs();
            if mag == 1.0 {
                write!(f, "{sep}{sign}{}x_{j}", if k > 0 { " " } else { "" })?;
            } else {
                write!(f, "{sep}{sign}{}{mag}*x_{j}", if k > 0 { " " } else { "" })?;
            }
        }
        write!(f, " {rel} {}", self.bound)
    }
}

/// Coordinates a constraint system or action set is expressed in.
#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    /// Link-following rows `S_i`.
    Link,
    /// Damped rows `P_i = alpha S_i + (1 - alpha) z`.
    Damped { damping: f64, zapping: Vec<f64> },
}

/// A list of linear constraints over `R^n`, the last one being the simplex
/// equation `sum(x) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetSystem {
    pub n: usize,
    pub space: Space,
    pub facets: Vec<Facet>,
}

/// Outcome of a separation query.
#[derive(Debug, Clone, PartialEq)]
pub enum Separation {
    Inside,
    /// The most violated constraint, as a separating hyperplane.
    Violated {
        facet: Facet,
        violation: f64,
    },
}

impl FacetSystem {
    pub fn separate(&self, x: &[f64]) -> Separation {
        self.separate_within(x, SEPARATION_TOL)
    }

    pub fn separate_within(&self, x: &[f64], tol: f64) -> Separation {
        assert_eq!(x.len(), self.n, "point dimension");
        let mut worst: Option<(usize, f64)> = None;
        for (k, f) in self.facets.iter().enumerate() {
            let v = f.violation(x);
            if v > tol && worst.is_none_or(|(_, w)| v > w) {
                worst = Some((k, v));
            }
        }
        match worst {
            None => Separation::Inside,
            Some((k, violation)) => Separation::Violated {
                facet: self.facets[k].clone(),
                violation,
            },
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.separate(x) == Separation::Inside
    }
}

/// Facets of the convex hull of the uniform rows available to a page with
/// obligatory links `obligatory`, facultative links `facultative`, and
/// dangling distribution `dangling`, in link space.
///
/// The anchor coordinate is the smallest obligatory link, or, without
/// obligatory links, the smallest forbidden page that the dangling
/// distribution reaches.
pub fn facets_discrete(obligatory: &[usize], facultative: &[usize], dangling: &[f64], n: usize) -> FacetSystem {
    let class = link_classes(obligatory, facultative, n);
    let mut facets = Vec::with_capacity(n + facultative.len() + 1);
    if let Some(&anchor) = obligatory.iter().min() {
        for (j, c) in class.iter().enumerate() {
            match c {
                LinkClass::Forbidden => facets.push(Facet::new(vec![(j, 1.0)], Relation::Eq, 0.0)),
                LinkClass::Obligatory if j != anchor => {
                    facets.push(Facet::new(vec![(j, 1.0), (anchor, -1.0)], Relation::Eq, 0.0))
                }
                LinkClass::Obligatory => {}
                LinkClass::Facultative => {
                    facets.push(Facet::new(vec![(j, 1.0)], Relation::Ge, 0.0));
                    facets.push(Facet::new(vec![(j, 1.0), (anchor, -1.0)], Relation::Le, 0.0));
                }
            }
        }
    } else if let Some(anchor) = (0..n).find(|&j| class[j] == LinkClass::Forbidden && dangling[j] > 0.0) {
        let za = dangling[anchor];
        for (j, c) in class.iter().enumerate() {
            let ratio = dangling[j] / za;
            match c {
                _ if j == anchor => facets.push(Facet::new(vec![(j, 1.0)], Relation::Ge, 0.0)),
                LinkClass::Forbidden => facets.push(Facet::new(vec![(j, 1.0), (anchor, -ratio)], Relation::Eq, 0.0)),
                LinkClass::Facultative => facets.push(Facet::new(vec![(j, 1.0), (anchor, -ratio)], Relation::Ge, 0.0)),
                LinkClass::Obligatory => unreachable!("no obligatory links here"),
            }
        }
    } else {
        for (j, c) in class.iter().enumerate() {
            let rel = if *c == LinkClass::Facultative {
                Relation::Ge
            } else {
                Relation::Eq
            };
            facets.push(Facet::new(vec![(j, 1.0)], rel, 0.0));
        }
    }
    facets.push(Facet::new((0..n).map(|j| (j, 1.0)).collect(), Relation::Eq, 1.0));
    FacetSystem {
        n,
        space: Space::Link,
        facets,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LinkClass {
    Obligatory,
    Facultative,
    Forbidden,
}

fn link_classes(obligatory: &[usize], facultative: &[usize], n: usize) -> Vec<LinkClass> {
    let mut class = vec![LinkClass::Forbidden; n];
    for &j in obligatory {
        class[j] = LinkClass::Obligatory;
    }
    for &j in facultative {
        class[j] = LinkClass::Facultative;
    }
    class
}

/// Rewrites a link-space system for damped rows by substituting
/// `x = (y - (1 - alpha) z) / alpha` into every constraint.
pub fn apply_damping(fs: &FacetSystem, damping: f64, zapping: &[f64]) -> FacetSystem {
    assert_eq!(fs.space, Space::Link, "system is already damped");
    let facets = fs
        .facets
        .iter()
        .map(|f| {
            let az: f64 = f.coeffs.iter().map(|&(j, a)| a * zapping[j]).sum();
            let bound = if f.is_simplex(fs.n) {
                // keep the simplex equation exact
                1.0
            } else {
                damping * f.bound + (1.0 - damping) * az
            };
            Facet {
                coeffs: f.coeffs.clone(),
                relation: f.relation,
                bound,
            }
        })
        .collect();
    FacetSystem {
        n: fs.n,
        space: Space::Damped {
            damping,
            zapping: zapping.to_vec(),
        },
        facets,
    }
}

/// Shape of a page's set of admissible rows.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionShape {
    /// Convex hull of the uniform rows on `O ∪ J`, `J ⊆ F`, plus the dangling
    /// row when `O` is empty.
    DiscreteUniform {
        obligatory: Vec<usize>,
        facultative: Vec<usize>,
        dangling: Vec<f64>,
    },
    /// `{x : lower <= x <= upper, sum(x) = 1}`.
    BoxSimplex { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalActionSet {
    pub shape: ActionShape,
    pub space: Space,
}

/// Result of maximizing a linear function over an action set.
#[derive(Debug, Clone, PartialEq)]
pub struct Maximizer {
    pub point: Vec<f64>,
    pub value: f64,
    /// Support of the maximizing uniform row, for discrete sets. Empty when
    /// the dangling row is chosen.
    pub support: Option<Vec<usize>>,
}

/// Outcome of the greedy selection for a discrete page.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyOutcome {
    /// Average of the objective over the chosen support.
    pub value: f64,
    /// Number of leading candidates activated.
    pub taken: usize,
    /// The dangling row beats every link subset.
    pub no_link: bool,
}

/// Orders `(objective, page)` candidates by decreasing objective, ties by
/// increasing page index.
pub fn sort_candidates(candidates: &mut [(f64, usize)]) {
    candidates.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
}

/// Best uniform support for a page, given the objective summed over its
/// obligatory links and the sorted facultative candidates.
///
/// Links are added while the running average stays strictly below the next
/// candidate, so tied links are left out and the support is minimal. With
/// no obligatory link, the greedy starts from the best single candidate and
/// the dangling row (objective `no_link_value`) wins only when strictly
/// better.
pub fn greedy_uniform(
    obligatory_sum: f64,
    obligatory_count: usize,
    candidates: &[(f64, usize)],
    no_link_value: Option<f64>,
) -> GreedyOutcome {
    let (mut sum, mut count, mut taken) = (obligatory_sum, obligatory_count, 0);
    if count == 0 {
        let Some(&(best, _)) = candidates.first() else {
            return GreedyOutcome {
                value: no_link_value.expect("a page without links has the dangling row"),
                taken: 0,
                no_link: true,
            };
        };
        sum = best;
        count = 1;
        taken = 1;
    }
    while taken < candidates.len() && sum / (count as f64) < candidates[taken].0 {
        sum += candidates[taken].0;
        count += 1;
        taken += 1;
    }
    let value = sum / count as f64;
    match no_link_value {
        Some(z) if obligatory_count == 0 && z > value => GreedyOutcome {
            value: z,
            taken: 0,
            no_link: true,
        },
        _ => GreedyOutcome {
            value,
            taken,
            no_link: false,
        },
    }
}

/// Maximizes `c . x` over the action set, returning an extreme point.
pub fn linear_maximize(set: &LocalActionSet, c: &[f64]) -> Result<Maximizer, PolytopeError> {
    let link = match &set.shape {
        ActionShape::DiscreteUniform {
            obligatory,
            facultative,
            dangling,
        } => maximize_discrete(obligatory, facultative, dangling, c),
        ActionShape::BoxSimplex { lower, upper } => {
            return water_fill(lower, upper, c);
        }
    };
    Ok(match &set.space {
        Space::Link => link,
        Space::Damped { damping, zapping } => {
            let zc: f64 = zapping.iter().zip(c).map(|(z, c)| z * c).sum();
            Maximizer {
                point: link
                    .point
                    .iter()
                    .zip(zapping)
                    .map(|(x, z)| damping * x + (1.0 - damping) * z)
                    .collect(),
                value: damping * link.value + (1.0 - damping) * zc,
                support: link.support,
            }
        }
    })
}

fn maximize_discrete(obligatory: &[usize], facultative: &[usize], dangling: &[f64], c: &[f64]) -> Maximizer {
    let n = c.len();
    let mut cand: Vec<(f64, usize)> = facultative.iter().map(|&j| (c[j], j)).collect();
    sort_candidates(&mut cand);
    let osum: f64 = obligatory.iter().map(|&j| c[j]).sum();
    let no_link = obligatory
        .is_empty()
        .then(|| dangling.iter().zip(c).map(|(z, c)| z * c).sum::<f64>());
    let g = greedy_uniform(osum, obligatory.len(), &cand, no_link);
    if g.no_link {
        return Maximizer {
            point: dangling.to_vec(),
            value: g.value,
            support: Some(Vec::new()),
        };
    }
    let mut support: Vec<usize> = obligatory
        .iter()
        .copied()
        .chain(cand[..g.taken].iter().map(|e| e.1))
        .collect();
    support.sort_unstable();
    let mut point = vec![0.0; n];
    let p = 1.0 / support.len() as f64;
    for &j in &support {
        point[j] = p;
    }
    Maximizer {
        point,
        value: g.value,
        support: Some(support),
    }
}

fn water_fill(lower: &[f64], upper: &[f64], c: &[f64]) -> Result<Maximizer, PolytopeError> {
    let n = c.len();
    if let Some(j) = (0..n).find(|&j| lower[j] > upper[j] + SEPARATION_TOL) {
        return Err(PolytopeError::Infeasible(format!(
            "lower bound exceeds upper bound at {j}"
        )));
    }
    let mut point = lower.to_vec();
    let mut remaining = 1.0 - lower.iter().sum::<f64>();
    if remaining < -SEPARATION_TOL {
        return Err(PolytopeError::Infeasible("lower bounds sum above 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
    for j in order {
        if remaining <= 0.0 {
            break;
        }
        let room = (upper[j] - lower[j]).max(0.0);
        let pour = room.min(remaining);
        point[j] += pour;
        remaining -= pour;
    }
    if remaining > SEPARATION_TOL {
        return Err(PolytopeError::Infeasible("upper bounds sum below 1".into()));
    }
    let value = point.iter().zip(c).map(|(x, c)| x * c).sum();
    Ok(Maximizer {
        point,
        value,
        support: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discrete(o: &[usize], f: &[usize], z: &[f64]) -> LocalActionSet {
        LocalActionSet {
            shape: ActionShape::DiscreteUniform {
                obligatory: o.to_vec(),
                facultative: f.to_vec(),
                dangling: z.to_vec(),
            },
            space: Space::Link,
        }
    }

    #[test]
    fn hypercube_case_facets() {
        let fs = facets_discrete(&[0], &[1], &[1.0 / 3.0; 3], 3);
        let text: Vec<String> = fs.facets.iter().map(|f| f.to_string()).collect();
        assert_eq!(text, ["x_1 >= 0", "-x_0 + x_1 <= 0", "x_2 = 0", "sum(x) = 1"]);
        assert!(fs.contains(&[1.0, 0.0, 0.0]));
        assert!(fs.contains(&[0.5, 0.5, 0.0]));
        assert!(!fs.contains(&[0.0, 1.0, 0.0]));
    }

    #[test]
    fn plain_simplex_case() {
        let fs = facets_discrete(&[], &[0, 1], &[0.5, 0.5], 2);
        assert_eq!(fs.facets.len(), 3);
        assert!(fs.contains(&[1.0, 0.0]));
        assert!(fs.contains(&[0.3, 0.7]));
        assert!(!fs.contains(&[1.2, -0.2]));
    }

    #[test]
    fn dangling_anchor_case() {
        let fs = facets_discrete(&[], &[0], &[0.4, 0.6], 2);
        let text: Vec<String> = fs.facets.iter().map(|f| f.to_string()).collect();
        assert_eq!(text[0], format!("x_0 - {}*x_1 >= 0", 0.4 / 0.6));
        assert_eq!(text[1], "x_1 >= 0");
        assert!(fs.contains(&[1.0, 0.0]));
        assert!(fs.contains(&[0.4, 0.6]));
        assert!(!fs.contains(&[0.3, 0.7]));
    }

    #[test]
    fn damping_transform() {
        let fs = facets_discrete(&[0], &[1], &[0.5, 0.5], 2);
        let damped = apply_damping(&fs, 0.85, &[0.5, 0.5]);
        // x_1 >= 0 becomes y_1 >= (1 - alpha) z_1
        assert_eq!(damped.facets[0].relation, Relation::Ge);
        assert!((damped.facets[0].bound - 0.075).abs() < 1e-15);
        // equal teleport entries cancel in x_1 <= x_0
        assert_eq!(damped.facets[1].bound, 0.0);
        assert_eq!(damped.facets.last().unwrap().bound, 1.0);
    }

    #[test]
    fn separation_examples() {
        let fs = facets_discrete(&[0], &[1], &[0.5, 0.5], 2);
        assert_eq!(fs.separate(&[0.5, 0.5]), Separation::Inside);
        match fs.separate(&[0.2, 0.8]) {
            Separation::Violated { facet, violation } => {
                assert_eq!(facet.to_string(), "-x_0 + x_1 <= 0");
                assert!((violation - 0.6).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        match fs.separate(&[0.6, 0.3]) {
            Separation::Violated { facet, violation } => {
                assert_eq!(facet.to_string(), "sum(x) = 1");
                assert!((violation - 0.1).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn greedy_keeps_minimal_tied_support() {
        let m = linear_maximize(&discrete(&[0], &[1, 2], &[1.0 / 3.0; 3]), &[1.0, 5.0, 3.0]).unwrap();
        assert_eq!(m.support, Some(vec![0, 1]));
        assert_eq!(m.value, 3.0);
        assert_eq!(m.point, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn single_action_page() {
        let m = linear_maximize(&discrete(&[0], &[], &[0.5, 0.5]), &[7.0, 100.0]).unwrap();
        assert_eq!(m.point, vec![1.0, 0.0]);
        assert_eq!(m.value, 7.0);
    }

    #[test]
    fn no_link_wins_only_when_strictly_better() {
        // dangling row: 0.4 * 1 + 0.6 * 3 = 2.2 > c_0 = 1
        let set = discrete(&[], &[0], &[0.4, 0.6]);
        let m = linear_maximize(&set, &[1.0, 3.0]).unwrap();
        assert_eq!(m.support, Some(vec![]));
        assert_eq!(m.point, vec![0.4, 0.6]);
        let m = linear_maximize(&set, &[3.0, 1.0]).unwrap();
        assert_eq!(m.support, Some(vec![0]));
    }

    #[test]
    fn water_filling() {
        let set = LocalActionSet {
            shape: ActionShape::BoxSimplex {
                lower: vec![0.1; 3],
                upper: vec![1.0; 3],
            },
            space: Space::Link,
        };
        let m = linear_maximize(&set, &[3.0, 2.0, 1.0]).unwrap();
        assert!((m.point[0] - 0.8).abs() < 1e-15);
        assert!((m.value - 2.7).abs() < 1e-12);
        let bad = LocalActionSet {
            shape: ActionShape::BoxSimplex {
                lower: vec![0.6, 0.6],
                upper: vec![1.0, 1.0],
            },
            space: Space::Link,
        };
        assert!(matches!(
            linear_maximize(&bad, &[1.0, 0.0]),
            Err(PolytopeError::Infeasible(_))
        ));
    }

    #[test]
    fn damped_maximizer_matches_transformed_point() {
        let set = LocalActionSet {
            space: Space::Damped {
                damping: 0.85,
                zapping: vec![0.5, 0.5],
            },
            ..discrete(&[0], &[1], &[0.5, 0.5])
        };
        let m = linear_maximize(&set, &[1.0, 3.0]).unwrap();
        assert!((m.point[0] - (0.85 * 0.5 + 0.075)).abs() < 1e-15);
        assert!((m.value - (0.85 * 2.0 + 0.15 * 2.0)).abs() < 1e-12);
    }
}
