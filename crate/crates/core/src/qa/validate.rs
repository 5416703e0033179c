use super::{answer_from_metadata, QaInstance};
use crate::traj::Trajectory;
use crate::wire::{Channel, HarnessMsg, PeerMsg, WireError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

/// Something that answers a question given the trajectory it is about.
pub trait Validator: Send + Sync {
    fn name(&self) -> String;
    /// `Err` is a transport or protocol failure, not a wrong answer.
    fn answer(&self, traj: &Trajectory, qa: &QaInstance) -> Result<String, String>;
}

pub struct OracleValidator;

impl Validator for OracleValidator {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn answer(&self, traj: &Trajectory, qa: &QaInstance) -> Result<String, String> {
        Ok(answer_from_metadata(traj, qa))
    }
}

/// Remote validator reached over the wire protocol. It receives the question
/// and the metadata entries of the evidence steps.
pub struct WireValidator {
    endpoint: String,
    channel: Mutex<Channel>,
}

impl WireValidator {
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self, WireError> {
        Ok(Self {
            endpoint: endpoint.to_string(),
            channel: Mutex::new(Channel::connect(endpoint, timeout)?),
        })
    }
}

impl Validator for WireValidator {
    fn name(&self) -> String {
        format!("wire:{}", self.endpoint)
    }

    fn answer(&self, traj: &Trajectory, qa: &QaInstance) -> Result<String, String> {
        let evidence: Vec<_> = qa
            .gt_steps
            .iter()
            .filter_map(|&t| traj.steps.get(t).map(|s| &s.metadata))
            .collect();
        let msg = HarnessMsg::Question {
            id: qa.id.clone(),
            question: qa.question.clone(),
            evidence: serde_json::to_value(evidence).expect("metadata serializes"),
        };
        let mut ch = self.channel.lock().map_err(|_| "channel poisoned".to_string())?;
        match ch.request(&msg).map_err(|e| e.to_string())? {
            PeerMsg::Answer { id, answer } if id == qa.id => Ok(answer),
            other => Err(format!("unexpected reply {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidatorSpec {
    Oracle,
    Wire(String),
}

impl ValidatorSpec {
    pub fn build(&self, timeout: Duration) -> Result<Box<dyn Validator>, WireError> {
        Ok(match self {
            ValidatorSpec::Oracle => Box::new(OracleValidator),
            ValidatorSpec::Wire(addr) => Box::new(WireValidator::connect(addr, timeout)?),
        })
    }
}

/// Parses `oracle[,wire:<addr>]...`.
pub fn parse_validators(list: &str) -> Result<Vec<ValidatorSpec>, String> {
    let specs: Vec<ValidatorSpec> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "oracle" => Ok(ValidatorSpec::Oracle),
            _ => match s.strip_prefix("wire:") {
                Some(addr) if !addr.is_empty() => Ok(ValidatorSpec::Wire(addr.to_string())),
                _ => Err(format!("unknown validator `{s}`")),
            },
        })
        .collect::<Result<_, _>>()?;
    if specs.is_empty() {
        return Err("at least one validator is required".into());
    }
    Ok(specs)
}

fn normalize(s: &str) -> Vec<String> {
    let s = s.trim().trim_end_matches('.').to_lowercase();
    let mut parts: Vec<String> = s.split(',').map(|p| p.trim().to_string()).collect();
    parts.sort();
    parts
}

/// Case-insensitive comparison; comma-separated lists compare as sets.
pub fn answers_match(expected: &str, given: &str) -> bool {
    normalize(expected) == normalize(given)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Verdict {
    pub validator_name: String,
    pub correct: bool,
    pub model_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerdictRecord {
    pub qa_id: String,
    pub verdicts: Vec<Verdict>,
    pub kept: bool,
    /// Kept by the multi-clue override although no validator was correct.
    #[serde(default)]
    pub overridden: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Filtered {
    pub kept: Vec<QaInstance>,
    pub dropped: Vec<QaInstance>,
    /// One record per question, sorted by question id.
    pub audit: Vec<VerdictRecord>,
}

/// Keeps a question when at least one validator answers it correctly. With
/// `keep_multi_clue`, questions with three or more evidence steps are kept
/// regardless.
pub fn filter_answerable(
    trajs: &BTreeMap<String, Trajectory>,
    qas: &[QaInstance],
    validators: &[Box<dyn Validator>],
    keep_multi_clue: bool,
) -> Result<Filtered, String> {
    if validators.is_empty() {
        return Err("at least one validator is required".into());
    }
    let records: Vec<VerdictRecord> = qas
        .par_iter()
        .map(|qa| {
            let verdicts: Vec<Verdict> = validators
                .iter()
                .map(|v| {
                    let result = match trajs.get(&qa.trajectory_id) {
                        Some(t) => v.answer(t, qa),
                        None => Err(format!("unknown trajectory {}", qa.trajectory_id)),
                    };
                    match result {
                        Ok(a) => Verdict {
                            validator_name: v.name(),
                            correct: answers_match(&qa.answer, &a),
                            model_answer: a,
                            note: None,
                        },
                        Err(e) => Verdict {
                            validator_name: v.name(),
                            correct: false,
                            model_answer: String::new(),
                            note: Some(e),
                        },
                    }
                })
                .collect();
            let answered = verdicts.iter().any(|v| v.correct);
            let overridden = !answered && keep_multi_clue && qa.gt_steps.len() >= 3;
            VerdictRecord {
                qa_id: qa.id.clone(),
                verdicts,
                kept: answered || overridden,
                overridden,
            }
        })
        .collect();
    let mut out = Filtered::default();
    for (qa, rec) in qas.iter().zip(&records) {
        if rec.kept {
            out.kept.push(qa.clone());
        } else {
            out.dropped.push(qa.clone());
        }
    }
    out.audit = records;
    out.audit.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    Ok(out)
}
