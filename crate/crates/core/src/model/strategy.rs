use super::{PageControl, WebGraphInstance};

/// Transition row of a continuously controlled page, in damped (P) space.
///
/// Only listed pages are stored. An unlisted page `j` sits at the
/// teleportation floor `(1 - alpha) z_j`, i.e. carries no link weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRow {
    entries: Vec<(usize, f64)>,
}

impl ContinuousRow {
    /// Sorts the entries by page; duplicate pages keep the last value.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|&(j, _)| j);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (j, v) in entries {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 = v,
                _ => out.push((j, v)),
            }
        }
        Self { entries: out }
    }

    /// Builds the damped row `alpha * link_row + (1 - alpha) z` from a
    /// sparse link-space row, listing only its support.
    pub fn from_link_row(link_row: &[(usize, f64)], damping: f64, zapping: &[f64]) -> Self {
        Self {
            entries: link_row
                .iter()
                .map(|&(j, s)| (j, damping * s + (1.0 - damping) * zapping[j]))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Link-space entries `(P_j - (1 - alpha) z_j) / alpha` of the listed
    /// pages.
    pub fn link_entries(&self, damping: f64, zapping: &[f64]) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .map(|&(j, p)| (j, (p - (1.0 - damping) * zapping[j]) / damping))
            .collect()
    }

    pub fn to_dense(&self, damping: f64, zapping: &[f64]) -> Vec<f64> {
        let mut row: Vec<f64> = zapping.iter().map(|z| (1.0 - damping) * z).collect();
        for &(j, p) in &self.entries {
            row[j] = p;
        }
        row
    }
}

/// Decision for one page.
#[derive(Debug, Clone, PartialEq)]
pub enum PageChoice {
    /// The page's frozen default row.
    Uncontrolled,
    /// Activated facultative links.
    Discrete(Vec<usize>),
    Continuous(ContinuousRow),
}

/// A webmaster's decision for every page.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pages: Vec<PageChoice>,
}

impl Strategy {
    pub fn new(pages: Vec<PageChoice>) -> Self {
        Self {
            pages: pages.into_iter().map(normalized).collect(),
        }
    }

    /// All facultative links deactivated; skeleton pages keep their
    /// template row.
    pub fn default_for(instance: &WebGraphInstance) -> Self {
        let pages = (0..instance.num_pages())
            .map(|i| match instance.control(i) {
                PageControl::Discrete => PageChoice::Discrete(Vec::new()),
                _ => PageChoice::Uncontrolled,
            })
            .collect();
        Self { pages }
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn page(&self, i: usize) -> &PageChoice {
        &self.pages[i]
    }

    pub fn pages(&self) -> &[PageChoice] {
        &self.pages
    }

    pub fn set(&mut self, i: usize, choice: PageChoice) {
        self.pages[i] = normalized(choice);
    }

    /// Activated links of page `i`, or `None` for a continuous row.
    pub fn activated(&self, i: usize) -> Option<&[usize]> {
        match &self.pages[i] {
            PageChoice::Discrete(j) => Some(j),
            PageChoice::Uncontrolled => Some(&[]),
            PageChoice::Continuous(_) => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.pages.iter().all(|c| !matches!(c, PageChoice::Continuous(_)))
    }
}

fn normalized(choice: PageChoice) -> PageChoice {
    match choice {
        PageChoice::Discrete(mut j) => {
            j.sort_unstable();
            j.dedup();
            PageChoice::Discrete(j)
        }
        other => other,
    }
}
