//! The three ways of presenting history to an agent: the raw interleaved
//! stream, a text digest, and a retrieved subset of past observations.

use crate::catalog;
use crate::planner::Goal;
use crate::qa::NameTable;
use crate::traj::{goal_tokens, StepRecord};
use crate::world::{Action, MetadataEntry, ObjectId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    Interleaved,
    MemText,
    MemImage,
}

impl FromStr for ContextMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "interleaved" => Ok(Self::Interleaved),
            "mem-text" => Ok(Self::MemText),
            "mem-image" => Ok(Self::MemImage),
            _ => Err(format!("unknown context mode `{s}`")),
        }
    }
}

impl ContextMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Interleaved => "interleaved",
            Self::MemText => "mem-text",
            Self::MemImage => "mem-image",
        }
    }
}

/// Per-entry token prices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCosts {
    pub per_image: u64,
    pub per_action: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entry {
    Goal(String),
    /// Observation at a step.
    State(usize),
    Action(String),
    Memory(String),
}

impl Entry {
    pub fn tokens(&self, costs: &TokenCosts) -> u64 {
        match self {
            Entry::Goal(g) | Entry::Memory(g) => goal_tokens(g),
            Entry::State(_) => costs.per_image,
            Entry::Action(_) => costs.per_action,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentContext {
    pub mode: ContextMode,
    pub goal: String,
    pub entries: Vec<Entry>,
    pub token_budget: u64,
    pub tokens: u64,
    pub truncated: bool,
}

pub fn count_tokens(entries: &[Entry], costs: &TokenCosts) -> u64 {
    entries.iter().map(|e| e.tokens(costs)).sum()
}

/// `[g, s0, a0, s1, ..., st]`. Over budget, the oldest (state, action)
/// pairs go first; the goal and the last `keep_recent` states stay unless
/// the budget cannot hold them, in which case older retained states are
/// dropped down to the current one.
pub fn build_interleaved(
    history: &[StepRecord],
    goal: &str,
    budget: u64,
    keep_recent: usize,
    costs: &TokenCosts,
) -> Result<AgentContext, EvalError> {
    let goal_cost = goal_tokens(goal);
    if budget < goal_cost + costs.per_image {
        return Err(EvalError::Spec(format!(
            "budget {budget} cannot hold the goal and one observation"
        )));
    }
    // pairs[i] = (s_i, a_i); the last pair has no action
    let mut pairs: Vec<(usize, Option<String>)> = Vec::with_capacity(history.len());
    for (i, rec) in history.iter().enumerate() {
        let next = history.get(i + 1).and_then(|r| r.action.as_ref()).map(|a| a.to_string());
        pairs.push((rec.step, next));
    }
    let pair_cost = |p: &(usize, Option<String>)| costs.per_image + p.1.as_ref().map_or(0, |_| costs.per_action);
    let mut total = goal_cost + pairs.iter().map(pair_cost).sum::<u64>();
    let mut drop = 0;
    let protected = pairs.len().saturating_sub(keep_recent);
    while total > budget && drop < protected {
        total -= pair_cost(&pairs[drop]);
        drop += 1;
    }
    while total > budget && drop + 1 < pairs.len() {
        total -= pair_cost(&pairs[drop]);
        drop += 1;
    }
    let mut entries = vec![Entry::Goal(goal.to_string())];
    for (s, a) in &pairs[drop..] {
        entries.push(Entry::State(*s));
        if let Some(a) = a {
            entries.push(Entry::Action(a.clone()));
        }
    }
    Ok(AgentContext {
        mode: ContextMode::Interleaved,
        goal: goal.to_string(),
        tokens: count_tokens(&entries, costs),
        entries,
        token_budget: budget,
        truncated: drop > 0,
    })
}

fn holder<'a>(m: &'a MetadataEntry, x: &ObjectId) -> Option<&'a ObjectId> {
    m.object_log
        .recep_objs
        .iter()
        .find(|(_, kids)| kids.contains(x))
        .map(|(r, _)| r)
}

/// Chronological digest of interactions followed by the last seen contents
/// of every receptacle, one line each.
pub fn build_text_memory(history: &[StepRecord], names: &NameTable) -> String {
    let n = |id: &ObjectId| names.name(id).unwrap_or(id.as_str()).to_string();
    let mut out = String::new();
    for (i, rec) in history.iter().enumerate().skip(1) {
        let t = rec.step;
        match &rec.action {
            Some(Action::PickupObject(x)) => match holder(&history[i - 1].metadata, x) {
                Some(y) => writeln!(out, "step {t}: picked up {} from {}", n(x), n(y)),
                None => writeln!(out, "step {t}: picked up {}", n(x)),
            },
            Some(Action::PutObject(x, z)) => {
                writeln!(out, "step {t}: put {} {} {}", n(x), catalog_prep(z), n(z))
            }
            Some(Action::SliceObject(x)) => writeln!(out, "step {t}: sliced {}", n(x)),
            Some(Action::OpenObject(x)) => writeln!(out, "step {t}: opened {}", n(x)),
            Some(Action::CloseObject(x)) => writeln!(out, "step {t}: closed {}", n(x)),
            _ => Ok(()),
        }
        .unwrap();
    }
    let mut last: BTreeMap<&ObjectId, &Vec<ObjectId>> = BTreeMap::new();
    for rec in history {
        for (r, kids) in &rec.metadata.object_log.recep_objs {
            last.insert(r, kids);
        }
    }
    for (r, kids) in last {
        writeln!(out, "{} {}: {}", catalog_prep(r), n(r), names.list(kids)).unwrap();
    }
    out
}

fn catalog_prep(id: &ObjectId) -> &'static str {
    catalog::builtin().get(id.type_name()).map_or("in", |t| t.prep)
}

/// Maps observations and goals into a shared vector space.
pub trait Embedder: Send + Sync {
    fn embed_observation(&self, m: &MetadataEntry) -> Vec<f64>;
    fn embed_goal(&self, goal: &Goal) -> Vec<f64>;
}

/// Normalized counts of visible object types; a goal is embedded by the
/// types it mentions.
pub struct BagOfTypes {
    index: BTreeMap<String, usize>,
}

impl Default for BagOfTypes {
    fn default() -> Self {
        let index = catalog::builtin()
            .types()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), i))
            .collect();
        Self { index }
    }
}

impl BagOfTypes {
    fn bag<'a>(&self, ids: impl Iterator<Item = &'a ObjectId>) -> Vec<f64> {
        let mut v = vec![0.0; self.index.len()];
        for id in ids {
            if let Some(&i) = self.index.get(id.type_name()) {
                v[i] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for BagOfTypes {
    fn embed_observation(&self, m: &MetadataEntry) -> Vec<f64> {
        self.bag(m.object_log.visible.iter())
    }

    fn embed_goal(&self, goal: &Goal) -> Vec<f64> {
        self.bag(goal.mentioned().into_iter())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    /// Step indices, best first.
    pub ranked: Vec<usize>,
    /// Set when fewer than `k` observations existed.
    pub short: bool,
}

/// Top-`k` past observations by cosine similarity to the goal; ties go to
/// the earlier step.
pub fn retrieve_image_memory(
    history: &[StepRecord],
    goal: &Goal,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Retrieval, EvalError> {
    if k == 0 {
        return Err(EvalError::Spec("top-k must be at least 1".into()));
    }
    let g = embedder.embed_goal(goal);
    let mut scored: Vec<(f64, usize)> = history
        .iter()
        .map(|r| (cosine(&embedder.embed_observation(&r.metadata), &g), r.step))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(Retrieval {
        short: k > scored.len(),
        ranked: scored.into_iter().take(k).map(|(_, s)| s).collect(),
    })
}
