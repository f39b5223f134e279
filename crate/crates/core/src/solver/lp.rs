//! Occupation-measure linear program of a small instance and a dense
//! two-phase simplex to solve it.
//!
//! Variables are the stationary visit frequencies `pi_i` and link flows
//! `sigma_ij = pi_i S_ij`, so `rho_ij = alpha sigma_ij + (1 - alpha) pi_i z_j`.
//! A page's facets `a . x (rel) b` lift to `a . sigma_i (rel) b pi_i`.

use thiserror::Error;

use crate::model::{distribution_dot, LinkRow, LinkWeights, PageControl, WebGraphInstance};
use crate::polytope::{facets_discrete, Relation};

/// Default limits of the dense LP path.
pub const MAX_LP_PAGES: usize = 200;
pub const MAX_LP_VARS: usize = 20_000;
/// Largest dense tableau, in entries.
const MAX_TABLEAU: usize = 50_000_000;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("LP too large: {0}")]
    TooLarge(String),
    #[error("LP is infeasible")]
    Infeasible,
    #[error("LP is unbounded")]
    Unbounded,
    #[error("simplex exceeded {MAX_PIVOTS} pivots")]
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpVar {
    /// Visit frequency of a page.
    Visits(usize),
    /// Link flow `sigma_ij` of a discrete page.
    Flow(usize, usize),
    /// Flow above the skeleton lower bound on link `(i, j)`.
    Excess(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    /// Sorted sparse coefficients.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `max objective . x` subject to `rows`, `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub vars: Vec<LpVar>,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// Per page, how `sigma_i` is written in terms of the variables.
    pages: Vec<PageFlow>,
    damping: f64,
    zapping: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum PageFlow {
    /// `sigma_i = pi_i * row`.
    Fixed(Vec<(usize, f64)>),
    /// `sigma_ij = x[var]`.
    Free(Vec<(usize, usize)>),
    /// `sigma_ij = lower_j pi_i + x[var]`.
    Boxed {
        lower: Vec<(usize, f64)>,
        excess: Vec<(usize, usize)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub pi: Vec<f64>,
    /// Dense occupation measure.
    pub rho: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpCap {
    pub max_pages: usize,
    pub max_vars: usize,
}

impl Default for LpCap {
    fn default() -> Self {
        Self {
            max_pages: MAX_LP_PAGES,
            max_vars: MAX_LP_VARS,
        }
    }
}

/// Dense fixed row of an uncontrolled page, teleport part expanded.
fn fixed_row(instance: &WebGraphInstance, i: usize) -> Vec<(usize, f64)> {
    let row = LinkRow::uniform(instance.obligatory(i));
    if row.teleport_weight == 0.0 {
        return row.entries;
    }
    let zd = instance.teleport().dangling();
    (0..zd.len())
        .filter(|&j| zd[j] > 0.0)
        .map(|j| (j, row.teleport_weight * zd[j]))
        .collect()
}

/// Builds the occupation-measure LP of an instance, coupling rows included.
pub fn lp_formulate(instance: &WebGraphInstance, cap: LpCap) -> Result<LpProblem, LpError> {
    let n = instance.num_pages();
    if n > cap.max_pages {
        return Err(LpError::TooLarge(format!("{n} pages, cap is {}", cap.max_pages)));
    }
    let tp = instance.teleport();
    let (a, z) = (tp.damping(), tp.zapping());
    let mut vars: Vec<LpVar> = (0..n).map(LpVar::Visits).collect();
    let mut rows: Vec<LpRow> = Vec::new();
    let mut pages = Vec::with_capacity(n);

    for i in 0..n {
        let flow = match instance.control(i) {
            PageControl::Uncontrolled => PageFlow::Fixed(fixed_row(instance, i)),
            PageControl::Discrete => {
                let fs = facets_discrete(instance.obligatory(i), instance.facultative(i), tp.dangling(), n);
                let mut zero = vec![false; n];
                for f in &fs.facets {
                    let nz: Vec<&(usize, f64)> = f.coeffs.iter().filter(|c| c.1 != 0.0).collect();
                    if f.relation == Relation::Eq && nz.len() == 1 && f.bound == 0.0 {
                        zero[nz[0].0] = true;
                    }
                }
                let mut index = vec![usize::MAX; n];
                let mut links = Vec::new();
                for j in (0..n).filter(|&j| !zero[j]) {
                    index[j] = vars.len();
                    links.push((j, vars.len()));
                    vars.push(LpVar::Flow(i, j));
                }
                for f in &fs.facets {
                    let nz: Vec<(usize, f64)> = f.coeffs.iter().copied().filter(|c| c.1 != 0.0).collect();
                    if nz.len() == 1 && f.bound == 0.0 && f.relation != Relation::Le {
                        // x_j = 0 removes the variable, x_j >= 0 is its bound
                        continue;
                    }
                    let mut coeffs: Vec<(usize, f64)> =
                        nz.iter().filter(|c| !zero[c.0]).map(|&(j, c)| (index[j], c)).collect();
                    if f.bound != 0.0 {
                        coeffs.push((i, -f.bound));
                    }
                    rows.push(LpRow {
                        coeffs: merged(coeffs),
                        relation: f.relation,
                        rhs: 0.0,
                    });
                }
                PageFlow::Free(links)
            }
            PageControl::Skeleton => {
                let sk = instance.skeleton(i).expect("skeleton page");
                let lower = sk.lower_bounds();
                let free = 1.0 - lower.iter().map(|e| e.1).sum::<f64>();
                let mut excess = Vec::new();
                if free > 0.0 {
                    for j in (0..n).filter(|j| !sk.banned.contains(j)) {
                        excess.push((j, vars.len()));
                        vars.push(LpVar::Excess(i, j));
                    }
                    let mut coeffs: Vec<(usize, f64)> = excess.iter().map(|e| (e.1, 1.0)).collect();
                    coeffs.push((i, -free));
                    rows.push(LpRow {
                        coeffs: merged(coeffs),
                        relation: Relation::Eq,
                        rhs: 0.0,
                    });
                }
                PageFlow::Boxed { lower, excess }
            }
        };
        pages.push(flow);
        if vars.len() > cap.max_vars {
            return Err(LpError::TooLarge(format!("more than {} variables", cap.max_vars)));
        }
    }

    // linear functional w -> sum_ij rho_ij w_ij as coefficients on the variables
    let functional = |w: &LinkWeights| -> Vec<(usize, f64)> {
        let mut c = Vec::new();
        for (i, flow) in pages.iter().enumerate() {
            let mut on_pi = (1.0 - a) * distribution_dot(w, i, z);
            match flow {
                PageFlow::Fixed(row) => on_pi += a * w.row_dot_sparse(i, row),
                PageFlow::Free(links) => c.extend(links.iter().map(|&(j, v)| (v, a * w.get(i, j)))),
                PageFlow::Boxed { lower, excess } => {
                    on_pi += a * w.row_dot_sparse(i, lower);
                    c.extend(excess.iter().map(|&(j, v)| (v, a * w.get(i, j))));
                }
            }
            c.push((i, on_pi));
        }
        merged(c)
    };

    let mut objective = vec![0.0; vars.len()];
    for (v, c) in functional(instance.rewards()) {
        objective[v] += c;
    }
    for c in instance.coupling() {
        rows.push(LpRow {
            coeffs: functional(&c.cost),
            relation: Relation::Le,
            rhs: c.bound,
        });
    }
    // flow balance pi_j - alpha sum_i sigma_ij = (1 - alpha) z_j, using sum(pi) = 1
    let mut inflow: Vec<Vec<(usize, f64)>> = (0..n).map(|j| vec![(j, 1.0)]).collect();
    for (i, flow) in pages.iter().enumerate() {
        match flow {
            PageFlow::Fixed(row) => row.iter().for_each(|&(j, s)| inflow[j].push((i, -a * s))),
            PageFlow::Free(links) => links.iter().for_each(|&(j, v)| inflow[j].push((v, -a))),
            PageFlow::Boxed { lower, excess } => {
                lower.iter().for_each(|&(j, l)| inflow[j].push((i, -a * l)));
                excess.iter().for_each(|&(j, v)| inflow[j].push((v, -a)));
            }
        }
    }
    for (j, coeffs) in inflow.into_iter().enumerate() {
        rows.push(LpRow {
            coeffs: merged(coeffs),
            relation: Relation::Eq,
            rhs: (1.0 - a) * z[j],
        });
    }
    rows.push(LpRow {
        coeffs: (0..n).map(|i| (i, 1.0)).collect(),
        relation: Relation::Eq,
        rhs: 1.0,
    });
    Ok(LpProblem {
        vars,
        objective,
        rows,
        pages,
        damping: a,
        zapping: z.to_vec(),
    })
}

fn merged(mut coeffs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    coeffs.sort_by_key(|c| c.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for (k, v) in coeffs {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += v,
            _ => out.push((k, v)),
        }
    }
    out.retain(|c| c.1 != 0.0);
    out
}

impl LpProblem {
    pub fn num_pages(&self) -> usize {
        self.pages.len()
    }

    /// Occupation measure encoded by a variable vector.
    pub fn occupation(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.num_pages();
        let a = self.damping;
        let pi: Vec<f64> = x[..n].to_vec();
        let rho = self
            .pages
            .iter()
            .enumerate()
            .map(|(i, flow)| {
                let mut sigma = vec![0.0; n];
                match flow {
                    PageFlow::Fixed(row) => row.iter().for_each(|&(j, s)| sigma[j] = pi[i] * s),
                    PageFlow::Free(links) => links.iter().for_each(|&(j, v)| sigma[j] = x[v]),
                    PageFlow::Boxed { lower, excess } => {
                        lower.iter().for_each(|&(j, l)| sigma[j] += pi[i] * l);
                        excess.iter().for_each(|&(j, v)| sigma[j] += x[v]);
                    }
                }
                (0..n)
                    .map(|j| a * sigma[j] + (1.0 - a) * pi[i] * self.zapping[j])
                    .collect()
            })
            .collect();
        (pi, rho)
    }
}

/// Solves the LP and maps the optimum back to an occupation measure.
pub fn lp_solve(lp: &LpProblem, tol: f64) -> Result<LpSolution, LpError> {
    let x = simplex_max(&lp.objective, &lp.rows, tol)?;
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let (pi, rho) = lp.occupation(&x);
    Ok(LpSolution { value, x, pi, rho })
}

/// Dense two-phase simplex for `max c.x` over `rows`, `x >= 0`. Dantzig
/// pricing, switching to Bland's rule after a run of degenerate pivots.
pub fn simplex_max(c: &[f64], rows: &[LpRow], tol: f64) -> Result<Vec<f64>, LpError> {
    let nx = c.len();
    let m = rows.len();
    // column layout: x | one slack per inequality | one artificial per row
    let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let width = nx + n_slack + m + 1;
    if (m + 1) * width > MAX_TABLEAU {
        return Err(LpError::TooLarge(format!("tableau {} x {width}", m + 1)));
    }
    let rhs_col = width - 1;
    let art0 = nx + n_slack;
    let mut t = Tableau {
        a: vec![0.0; (m + 1) * width],
        width,
        m,
        basis: vec![0; m],
    };
    let mut slack = nx;
    for (r, row) in rows.iter().enumerate() {
        let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        for &(j, v) in &row.coeffs {
            *t.at(r, j) = sign * v;
        }
        match row.relation {
            Relation::Le => {
                *t.at(r, slack) = sign;
                slack += 1;
            }
            Relation::Ge => {
                *t.at(r, slack) = -sign;
                slack += 1;
            }
            Relation::Eq => {}
        }
        *t.at(r, art0 + r) = 1.0;
        *t.at(r, rhs_col) = sign * row.rhs;
        t.basis[r] = art0 + r;
    }
    // start from a slack basis where the slack has coefficient +1
    for r in 0..m {
        if let Some(s) = (nx..art0).find(|&s| *t.at(r, s) == 1.0) {
            t.basis[r] = s;
            *t.at(r, art0 + r) = 0.0;
        }
    }
    let scale = 1.0f64.max(rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max));

    // phase 1: maximize -sum(artificials)
    let mut cost1 = vec![0.0; width - 1];
    for col in cost1.iter_mut().skip(art0) {
        *col = -1.0;
    }
    t.set_objective(&cost1);
    t.optimize(width - 1, tol)?;
    if t.value() < -tol * scale.max(1.0) * 10.0 {
        return Err(LpError::Infeasible);
    }
    // drive artificials out of the basis; rows where that fails are redundant
    let mut keep = vec![true; m];
    for (r, k) in keep.iter_mut().enumerate() {
        if t.basis[r] >= art0 {
            match (0..art0).find(|&j| t.get(r, j).abs() > 1e-9) {
                Some(j) => t.pivot(r, j),
                None => *k = false,
            }
        }
    }
    // phase 2 over original and slack columns only
    let mut cost2 = vec![0.0; width - 1];
    cost2[..nx].copy_from_slice(c);
    t.set_objective(&cost2);
    t.drop_rows(&keep);
    t.optimize(art0, tol)?;
    let mut x = vec![0.0; nx];
    for r in 0..t.m {
        if t.basis[r] < nx {
            x[t.basis[r]] = t.get(r, rhs_col).max(0.0);
        }
    }
    Ok(x)
}

struct Tableau {
    /// Row-major `(m + 1) x width`; the last row holds reduced costs.
    a: Vec<f64>,
    width: usize,
    m: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.a[r * self.width + c]
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width + c]
    }

    fn value(&self) -> f64 {
        self.get(self.m, self.width - 1)
    }

    /// Objective row `-cost`, made consistent with the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width;
        let obj = self.m * w;
        for (x, c) in self.a[obj..obj + w - 1].iter_mut().zip(cost) {
            *x = -c;
        }
        self.a[obj + w - 1] = 0.0;
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for j in 0..w {
                    self.a[obj + j] += cb * self.a[r * w + j];
                }
            }
        }
    }

    fn drop_rows(&mut self, keep: &[bool]) {
        let w = self.width;
        let mut a = Vec::with_capacity(self.a.len());
        let mut basis = Vec::new();
        for r in (0..self.m).filter(|&r| keep[r]) {
            a.extend_from_slice(&self.a[r * w..(r + 1) * w]);
            basis.push(self.basis[r]);
        }
        a.extend_from_slice(&self.a[self.m * w..]);
        self.m = basis.len();
        self.a = a;
        self.basis = basis;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        let pivot_row: Vec<f64> = self.a[r * w..(r + 1) * w].to_vec();
        for k in 0..=self.m {
            if k == r {
                continue;
            }
            let f = self.a[k * w + c];
            if f != 0.0 {
                let row = &mut self.a[k * w..(k + 1) * w];
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs primal simplex pivots over the first `cols` columns.
    fn optimize(&mut self, cols: usize, tol: f64) -> Result<(), LpError> {
        let w = self.width;
        let obj = self.m * w;
        let mut degenerate = 0usize;
        for _ in 0..MAX_PIVOTS {
            let bland = degenerate > 50;
            let entering = if bland {
                (0..cols).find(|&j| self.a[obj + j] < -tol)
            } else {
                (0..cols)
                    .filter(|&j| self.a[obj + j] < -tol)
                    .min_by(|&x, &y| self.a[obj + x].total_cmp(&self.a[obj + y]))
            };
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let v = self.a[r * w + c];
                if v > tol {
                    let ratio = self.a[r * w + w - 1] / v;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(LpError::Unbounded);
            };
            degenerate = if ratio.abs() <= 1e-12 { degenerate + 1 } else { 0 };
            self.pivot(r, c);
        }
        Err(LpError::IterationLimit)
    }
}
