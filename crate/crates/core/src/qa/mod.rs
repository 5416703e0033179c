//! Needle-in-the-haystack question generation over recorded trajectories.
//!
//! Questions are produced by trigger rules from a re-simulation of each
//! trajectory and annotated with the steps whose observations support the
//! answer. [`answer_from_metadata`] answers the same questions from the logged
//! metadata only and serves as the built-in validator.

mod generate;
mod names;
mod oracle;
mod validate;

pub use generate::generate_qa;
pub use names::NameTable;
pub use oracle::{answer_from_metadata, answer_question, UNANSWERABLE};
pub use validate::{
    answers_match, filter_answerable, parse_validators, Filtered, OracleValidator, Validator,
    ValidatorSpec, Verdict, VerdictRecord, WireValidator,
};

use crate::provenance::Provenance;
use crate::rng::stream_rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QaType {
    Presence,
    OpenState,
    LocationTrace,
    Slicing,
    ContainerContent,
    PutAction,
    FinalState,
    MovementCount,
}

impl QaType {
    pub const ALL: [QaType; 8] = [
        QaType::Presence,
        QaType::OpenState,
        QaType::LocationTrace,
        QaType::Slicing,
        QaType::ContainerContent,
        QaType::PutAction,
        QaType::FinalState,
        QaType::MovementCount,
    ];
}

impl fmt::Display for QaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("serializes");
        f.write_str(v.as_str().unwrap())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceClass {
    Single,
    Multi,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QaInstance {
    pub id: String,
    pub trajectory_id: String,
    pub question: String,
    pub answer: String,
    pub qa_type: QaType,
    /// Object type the question is about; used for balancing.
    pub obj_type: String,
    pub gt_steps: Vec<usize>,
    pub evidence_class: EvidenceClass,
}

impl QaInstance {
    pub fn cell(&self) -> (QaType, &str) {
        (self.qa_type, &self.obj_type)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    pub items: Vec<QaInstance>,
    /// Set when fewer than `target` questions were available.
    pub short: bool,
}

/// Per-cell cap used by [`sample_balanced`].
pub fn cell_cap(target: usize, cells: usize) -> usize {
    target.div_ceil(cells.max(1)) + 2
}

/// Draws `target` questions, choosing a (type, object type) cell uniformly
/// among those with items left and below the cap, so that every question is
/// weighted by the inverse of its cell's frequency. When capped cells cannot
/// reach `target`, the remainder is drawn from the uncapped leftovers.
pub fn sample_balanced(pool: &[QaInstance], target: usize, seed: u64) -> Sampled {
    let mut rng = stream_rng(seed, 3);
    if target >= pool.len() {
        let mut items = pool.to_vec();
        items.shuffle(&mut rng);
        return Sampled {
            items,
            short: target > pool.len(),
        };
    }
    let mut cells: BTreeMap<(QaType, &str), Vec<&QaInstance>> = BTreeMap::new();
    for q in pool {
        cells.entry(q.cell()).or_default().push(q);
    }
    let mut queues: Vec<Vec<&QaInstance>> = cells.into_values().collect();
    for q in &mut queues {
        q.shuffle(&mut rng);
        q.reverse();
    }
    let cap = cell_cap(target, queues.len());
    let mut taken = vec![0usize; queues.len()];
    let mut items = Vec::with_capacity(target);
    let mut capped = true;
    while items.len() < target {
        let open: Vec<usize> = (0..queues.len())
            .filter(|&i| !queues[i].is_empty() && (!capped || taken[i] < cap))
            .collect();
        if open.is_empty() {
            capped = false;
            continue;
        }
        let i = open[rng.gen_range(0..open.len())];
        items.push(queues[i].pop().unwrap().clone());
        taken[i] += 1;
    }
    Sampled { items, short: false }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum QaLine {
    Header { provenance: Provenance, count: usize },
    Qa(QaInstance),
}

/// Line-delimited QA file: a header record followed by one record per question.
pub fn write_qa_file(qas: &[QaInstance], provenance: &Provenance) -> String {
    let mut out = serde_json::to_string(&QaLine::Header {
        provenance: provenance.clone(),
        count: qas.len(),
    })
    .expect("header serializes");
    out.push('\n');
    for q in qas {
        out.push_str(&serde_json::to_string(&QaLine::Qa(q.clone())).expect("qa serializes"));
        out.push('\n');
    }
    out
}

pub fn read_qa_file(text: &str) -> Result<(Provenance, Vec<QaInstance>), String> {
    let mut header = None;
    let mut qas = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))? {
            QaLine::Header { provenance, .. } if header.is_none() => header = Some(provenance),
            QaLine::Header { .. } => return Err(format!("line {}: second header", i + 1)),
            QaLine::Qa(q) => qas.push(q),
        }
    }
    let p = header.ok_or("missing header record")?;
    if !p.is_compatible() {
        return Err(format!("written by {} {}", p.tool, p.version));
    }
    Ok((p, qas))
}
