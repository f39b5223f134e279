//! JSON documents for instances and strategies.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{
    ContinuousRow, CouplingConstraint, InstanceBuilder, LinkWeights, ModelError, PageChoice, PageControl, Skeleton,
    Strategy, WebGraphInstance,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub num_pages: usize,
    pub damping: f64,
    pub teleport: TeleportDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dangling_teleport: Option<Vec<f64>>,
    #[serde(default)]
    pub obligatory: Vec<(usize, usize)>,
    #[serde(default)]
    pub facultative: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<RewardsDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skeleton: Vec<SkeletonDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coupling: Vec<CouplingDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TeleportDoc {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardsDoc {
    PerPage {
        values: Vec<f64>,
    },
    PerLink {
        entries: Vec<(usize, usize, f64)>,
        #[serde(default)]
        default: f64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonDoc {
    pub page: usize,
    pub q: Vec<f64>,
    pub mu: f64,
    #[serde(default)]
    pub banned: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_page: Option<Vec<f64>>,
    pub bound: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyDoc {
    pub pages: Vec<PageDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PageDoc {
    Discrete {
        page: usize,
        activated: Vec<usize>,
    },
    Continuous {
        page: usize,
        row_entries: Vec<(usize, f64)>,
    },
}

fn parse_json<T: serde::de::DeserializeOwned>(source: impl Read) -> Result<T, ModelError> {
    serde_json::from_reader(source)
        .map_err(|e| ModelError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))
}

/// Reads and validates an instance document.
pub fn load_instance(source: impl Read) -> Result<WebGraphInstance, ModelError> {
    instance_from_doc(parse_json(source)?)
}

pub fn instance_from_doc(doc: InstanceDoc) -> Result<WebGraphInstance, ModelError> {
    let n = doc.num_pages;
    if n == 0 {
        return Err(ModelError::validation("num_pages must be positive"));
    }
    let mut b = InstanceBuilder::new(n, doc.damping);
    match doc.teleport {
        TeleportDoc::Named(name) if name == "uniform" => {}
        TeleportDoc::Named(name) => {
            return Err(ModelError::parse(
                "teleport",
                format!("expected \"uniform\" or a list of numbers, found \"{name}\""),
            ))
        }
        TeleportDoc::Explicit(z) => b = b.teleport(z),
    }
    if let Some(zd) = doc.dangling_teleport {
        b = b.dangling_teleport(zd);
    }
    b = b.obligatory_links(doc.obligatory).facultative_links(doc.facultative);
    if let Some(r) = doc.rewards {
        b = b.rewards(rewards_from_doc(n, r, "rewards")?);
    }
    for sk in doc.skeleton {
        b = b.skeleton(
            sk.page,
            Skeleton {
                q: sk.q,
                mu: sk.mu,
                banned: sk.banned,
            },
        );
    }
    for (k, c) in doc.coupling.into_iter().enumerate() {
        let ctx = format!("coupling[{k}]");
        let cost = match (c.entries, c.per_page) {
            (Some(e), None) => rewards_from_doc(
                n,
                RewardsDoc::PerLink {
                    entries: e,
                    default: 0.0,
                },
                &ctx,
            )?,
            (None, Some(v)) => rewards_from_doc(n, RewardsDoc::PerPage { values: v }, &ctx)?,
            _ => {
                return Err(ModelError::parse(
                    ctx,
                    "exactly one of \"entries\" or \"per_page\" is required",
                ))
            }
        };
        b = b.coupling(CouplingConstraint { cost, bound: c.bound });
    }
    b.build()
}

fn rewards_from_doc(n: usize, doc: RewardsDoc, ctx: &str) -> Result<LinkWeights, ModelError> {
    match doc {
        RewardsDoc::PerPage { values } => {
            if values.len() != n {
                return Err(ModelError::validation(format!(
                    "{ctx}: per-page values must have one entry per page"
                )));
            }
            Ok(LinkWeights::per_page(values))
        }
        RewardsDoc::PerLink { entries, default } => {
            if entries.iter().any(|&(i, j, _)| i >= n || j >= n) {
                return Err(ModelError::validation(format!("{ctx}: link index out of range")));
            }
            Ok(LinkWeights::per_link(n, &entries, default))
        }
    }
}

fn weights_to_doc(w: &LinkWeights) -> RewardsDoc {
    if let Some(v) = w.page_values() {
        return RewardsDoc::PerPage { values: v.to_vec() };
    }
    let base = w.base();
    let uniform_base = base.windows(2).all(|p| p[0] == p[1]);
    let default = if uniform_base { base[0] } else { 0.0 };
    let mut entries = Vec::new();
    for i in 0..w.len() {
        if uniform_base {
            entries.extend(w.overrides(i).iter().map(|&(j, v)| (i, j, v)));
        } else {
            entries.extend((0..w.len()).map(|j| (i, j, w.get(i, j))).filter(|e| e.2 != 0.0));
        }
    }
    RewardsDoc::PerLink { entries, default }
}

fn link_pairs<'a>(n: usize, f: impl Fn(usize) -> &'a [usize]) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| f(i).iter().map(move |&j| (i, j))).collect()
}

pub fn instance_to_doc(inst: &WebGraphInstance) -> InstanceDoc {
    let n = inst.num_pages();
    let tp = inst.teleport();
    InstanceDoc {
        num_pages: n,
        damping: tp.damping(),
        teleport: TeleportDoc::Explicit(tp.zapping().to_vec()),
        dangling_teleport: (tp.dangling() != tp.zapping()).then(|| tp.dangling().to_vec()),
        obligatory: link_pairs(n, |i| inst.obligatory(i)),
        facultative: link_pairs(n, |i| inst.facultative(i)),
        rewards: Some(weights_to_doc(inst.rewards())),
        skeleton: (0..n)
            .filter_map(|i| {
                inst.skeleton(i).map(|s| SkeletonDoc {
                    page: i,
                    q: s.q.clone(),
                    mu: s.mu,
                    banned: s.banned.clone(),
                })
            })
            .collect(),
        coupling: inst
            .coupling()
            .iter()
            .map(|c| match weights_to_doc(&c.cost) {
                RewardsDoc::PerPage { values } => CouplingDoc {
                    entries: None,
                    per_page: Some(values),
                    bound: c.bound,
                },
                RewardsDoc::PerLink { entries, default } => {
                    let mut entries = entries;
                    if default != 0.0 {
                        let full = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
                        entries = full.map(|(i, j)| (i, j, c.cost.get(i, j))).collect();
                    }
                    CouplingDoc {
                        entries: Some(entries),
                        per_page: None,
                        bound: c.bound,
                    }
                }
            })
            .collect(),
    }
}

pub fn instance_to_json(inst: &WebGraphInstance) -> String {
    serde_json::to_string_pretty(&instance_to_doc(inst)).expect("instance serializes")
}

/// Reads a strategy document; pages it does not mention keep their default
/// choice (no facultative link, template row on skeleton pages).
pub fn load_strategy(source: impl Read, instance: &WebGraphInstance) -> Result<Strategy, ModelError> {
    let doc: StrategyDoc = parse_json(source)?;
    strategy_from_doc(doc, instance)
}

pub fn strategy_from_doc(doc: StrategyDoc, instance: &WebGraphInstance) -> Result<Strategy, ModelError> {
    let n = instance.num_pages();
    let mut strategy = Strategy::default_for(instance);
    let mut seen = vec![false; n];
    for p in doc.pages {
        let (page, choice) = match p {
            PageDoc::Discrete { page, activated } => (page, PageChoice::Discrete(activated)),
            PageDoc::Continuous { page, row_entries } => {
                (page, PageChoice::Continuous(ContinuousRow::new(row_entries)))
            }
        };
        if page >= n {
            return Err(ModelError::invalid_strategy(format!("page {page} out of range")));
        }
        if std::mem::replace(&mut seen[page], true) {
            return Err(ModelError::invalid_strategy(format!("page {page} listed twice")));
        }
        strategy.set(page, choice);
    }
    Ok(strategy)
}

pub fn strategy_to_doc(strategy: &Strategy, instance: &WebGraphInstance) -> StrategyDoc {
    let pages = strategy
        .pages()
        .iter()
        .enumerate()
        .filter_map(|(page, c)| match c {
            PageChoice::Uncontrolled => None,
            PageChoice::Discrete(a) if a.is_empty() && instance.control(page) != PageControl::Discrete => None,
            PageChoice::Discrete(a) => Some(PageDoc::Discrete {
                page,
                activated: a.clone(),
            }),
            PageChoice::Continuous(row) => Some(PageDoc::Continuous {
                page,
                row_entries: row.entries().to_vec(),
            }),
        })
        .collect();
    StrategyDoc { pages }
}

pub fn strategy_to_json(strategy: &Strategy, instance: &WebGraphInstance) -> String {
    serde_json::to_string_pretty(&strategy_to_doc(strategy, instance)).expect("strategy serializes")
}
