//! Sparse per-link weights used for rewards and coupling costs.

/// An `n x n` weight matrix stored as a per-row base value plus sparse
/// per-link overrides.
///
/// Entry `(i, j)` is the override for `j` in row `i` when present, and
/// `base[i]` otherwise. Per-page rewards have no overrides; per-link rewards
/// with a default value use `base[i] = default` for every row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkWeights {
    base: Vec<f64>,
    overrides: Vec<Vec<(usize, f64)>>,
}

impl LinkWeights {
    pub fn zeros(n: usize) -> Self {
        Self::per_page(vec![0.0; n])
    }

    /// Row-constant weights, `w[i][j] = values[i]`.
    pub fn per_page(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            base: values,
            overrides: vec![Vec::new(); n],
        }
    }

    /// Builds weights from `(i, j, value)` triples on top of a constant
    /// default. Later duplicates of the same `(i, j)` replace earlier ones.
    pub fn per_link(n: usize, entries: &[(usize, usize, f64)], default: f64) -> Self {
        let mut overrides = vec![Vec::new(); n];
        for &(i, j, v) in entries {
            overrides[i].push((j, v));
        }
        for row in &mut overrides {
            // stable sort keeps the last duplicate after dedup below
            row.sort_by_key(|&(j, _)| j);
            let mut dedup: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match dedup.last_mut() {
                    Some(last) if last.0 == j => last.1 = v,
                    _ => dedup.push((j, v)),
                }
            }
            *row = dedup;
        }
        Self {
            base: vec![default; n],
            overrides,
        }
    }

    /// Dense constructor, mostly for small tests and oracles.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut entries = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self::per_link(n, &entries, 0.0)
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// Sorted `(j, value)` overrides of row `i`.
    pub fn overrides(&self, i: usize) -> &[(usize, f64)] {
        &self.overrides[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.overrides[i].binary_search_by_key(&j, |&(k, _)| k) {
            Ok(pos) => self.overrides[i][pos].1,
            Err(_) => self.base[i],
        }
    }

    /// True when every row is constant, i.e. the weight of a link only
    /// depends on its origin page.
    pub fn is_per_page(&self) -> bool {
        self.overrides
            .iter()
            .zip(&self.base)
            .all(|(row, &b)| row.iter().all(|&(_, v)| v == b))
    }

    /// Per-page values when [`is_per_page`](Self::is_per_page) holds.
    pub fn page_values(&self) -> Option<&[f64]> {
        self.is_per_page().then_some(self.base.as_slice())
    }

    /// Largest absolute entry.
    pub fn sup_norm(&self) -> f64 {
        let base = self.base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.overrides.iter().flatten().fold(base, |m, &(_, v)| m.max(v.abs()))
    }

    /// `sum_j x_j w[i][j]` for a dense vector `x` over all pages.
    pub fn row_dot_dense(&self, i: usize, x: &[f64]) -> f64 {
        let total: f64 = x.iter().sum();
        let b = self.base[i];
        let mut acc = b * total;
        for &(j, v) in &self.overrides[i] {
            acc += x[j] * (v - b);
        }
        acc
    }

    /// `sum_j x_j w[i][j]` for a sparse vector given as sorted `(j, x_j)`.
    pub fn row_dot_sparse(&self, i: usize, x: &[(usize, f64)]) -> f64 {
        let b = self.base[i];
        let ov = &self.overrides[i];
        let mut acc = 0.0;
        let mut k = 0;
        for &(j, xj) in x {
            while k < ov.len() && ov[k].0 < j {
                k += 1;
            }
            let w = if k < ov.len() && ov[k].0 == j { ov[k].1 } else { b };
            acc += xj * w;
        }
        acc
    }

    /// Calls `f(j, w[i][j])` for every sorted index `j` in `cols`.
    pub fn for_each_in_row(&self, i: usize, cols: &[usize], mut f: impl FnMut(usize, f64)) {
        let b = self.base[i];
        let ov = &self.overrides[i];
        let mut k = 0;
        for &j in cols {
            while k < ov.len() && ov[k].0 < j {
                k += 1;
            }
            let w = if k < ov.len() && ov[k].0 == j { ov[k].1 } else { b };
            f(j, w);
        }
    }

    /// `self * scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            base: self.base.iter().map(|v| v * scale).collect(),
            overrides: self
                .overrides
                .iter()
                .map(|row| row.iter().map(|&(j, v)| (j, v * scale)).collect())
                .collect(),
        }
    }

    /// Subtracts `shift[i]` from every entry of row `i`.
    pub fn row_shifted(&self, shift: &[f64]) -> Self {
        assert_eq!(shift.len(), self.len(), "shift length");
        Self {
            base: self.base.iter().zip(shift).map(|(b, s)| b - s).collect(),
            overrides: self
                .overrides
                .iter()
                .zip(shift)
                .map(|(row, s)| row.iter().map(|&(j, v)| (j, v - s)).collect())
                .collect(),
        }
    }

    /// `self + coef * other`, merging override patterns.
    pub fn add_scaled(&self, coef: f64, other: &LinkWeights) -> Self {
        assert_eq!(self.len(), other.len(), "weight dimensions differ");
        let mut base = Vec::with_capacity(self.len());
        let mut overrides = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let (a, b) = (&self.overrides[i], &other.overrides[i]);
            let (ab, bb) = (self.base[i], other.base[i]);
            base.push(ab + coef * bb);
            let mut row = Vec::with_capacity(a.len() + b.len());
            let (mut p, mut q) = (0, 0);
            while p < a.len() || q < b.len() {
                let ja = a.get(p).map_or(usize::MAX, |e| e.0);
                let jb = b.get(q).map_or(usize::MAX, |e| e.0);
                if ja == jb {
                    row.push((ja, a[p].1 + coef * b[q].1));
                    p += 1;
                    q += 1;
                } else if ja < jb {
                    row.push((ja, a[p].1 + coef * bb));
                    p += 1;
                } else {
                    row.push((jb, ab + coef * b[q].1));
                    q += 1;
                }
            }
            overrides.push(row);
        }
        Self { base, overrides }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let mut row = vec![self.base[i]; self.len()];
                for &(j, v) in &self.overrides[i] {
                    row[j] = v;
                }
                row
            })
            .collect()
    }
}
