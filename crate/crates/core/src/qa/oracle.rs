//! Answers questions from the logged metadata alone.
//!
//! This is a second code path next to the generator: it never touches the
//! simulator and recovers pickups and puts from inventory changes between
//! consecutive metadata entries.

use super::names::NameTable;
use super::QaInstance;
use crate::traj::Trajectory;
use crate::world::{Action, ObjectId, ObjectLog};
use regex::Regex;
use std::collections::BTreeSet;
use std::sync::OnceLock;

pub const UNANSWERABLE: &str = "<unanswerable>";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pattern {
    AnyInRoom,
    HaveSeen,
    WasOpen,
    BeforePut,
    MovedFrom,
    WhereNow,
    WhatSliced,
    InWhenSliced,
    WereIn,
    PutIn,
    AreIn,
    HowManyIn,
    IsIn,
    TimesMoved,
}

fn patterns() -> &'static [(Pattern, Regex)] {
    static P: OnceLock<Vec<(Pattern, Regex)>> = OnceLock::new();
    P.get_or_init(|| {
        let n = r"([a-z][a-z0-9 ]*?)";
        let p = r"(?:in|on)";
        [
            (Pattern::AnyInRoom, format!(r"^Is there any {n} in this room\?$")),
            (Pattern::HaveSeen, format!(r"^Have you seen an? {n}\?$")),
            (Pattern::WasOpen, format!(r"^Was the {n} open\?$")),
            (Pattern::BeforePut, format!(r"^Where was the {n} before you put it to the {n}\?$")),
            (Pattern::MovedFrom, format!(r"^Where did you move the {n} from the {n}\?$")),
            (Pattern::WhereNow, format!(r"^Where is the {n} now\?$")),
            (Pattern::WhatSliced, r"^What did you slice\?$".to_string()),
            (
                Pattern::InWhenSliced,
                format!(r"^What objects were {p} the {n} when you slice the {n}\?$"),
            ),
            (Pattern::WereIn, format!(r"^What objects were {p} the {n}\?$")),
            (Pattern::PutIn, format!(r"^What object did you put {p} the {n}\?$")),
            (Pattern::AreIn, format!(r"^What objects are {p} the {n}\?$")),
            (Pattern::HowManyIn, format!(r"^How many objects were {p} the {n}\?$")),
            (Pattern::IsIn, format!(r"^Is the {n} {p} the {n}\?$")),
            (Pattern::TimesMoved, format!(r"^How many times did you move the {n}\?$")),
        ]
        .into_iter()
        .map(|(k, re)| (k, Regex::new(&re).expect("pattern compiles")))
        .collect()
    })
}

struct Log<'a> {
    logs: Vec<&'a ObjectLog>,
    names: NameTable,
}

impl Log<'_> {
    fn held(&self, t: usize, x: &ObjectId) -> bool {
        self.logs[t].inven_obj.contains(x)
    }

    /// Receptacle listing `x` among its contents at step `t`.
    fn holder(&self, t: usize, x: &ObjectId) -> Option<&ObjectId> {
        self.logs[t]
            .recep_objs
            .iter()
            .find(|(_, kids)| kids.contains(x))
            .map(|(r, _)| r)
    }

    fn picked(&self, x: &ObjectId) -> Vec<usize> {
        (1..self.logs.len())
            .filter(|&t| self.held(t, x) && !self.held(t - 1, x))
            .collect()
    }

    fn dropped(&self, x: &ObjectId) -> Vec<usize> {
        (1..self.logs.len())
            .filter(|&t| !self.held(t, x) && self.held(t - 1, x))
            .collect()
    }

    /// Every (step, object, destination) put event.
    fn puts(&self) -> Vec<(usize, ObjectId, ObjectId)> {
        let mut out = Vec::new();
        for t in 1..self.logs.len() {
            for x in &self.logs[t - 1].inven_obj {
                if !self.held(t, x) {
                    if let Some(r) = self.holder(t, x) {
                        out.push((t, x.clone(), r.clone()));
                    }
                }
            }
        }
        out
    }

    fn name(&self, id: &ObjectId) -> String {
        self.names.name(id).unwrap_or(id.as_str()).to_string()
    }
}

/// Recomputes the answer to `qa` from `traj`'s metadata, or [`UNANSWERABLE`].
pub fn answer_from_metadata(traj: &Trajectory, qa: &QaInstance) -> String {
    answer_question(traj, &qa.question).unwrap_or_else(|| UNANSWERABLE.to_string())
}

pub fn answer_question(traj: &Trajectory, question: &str) -> Option<String> {
    let (kind, caps) = patterns()
        .iter()
        .find_map(|(k, re)| re.captures(question).map(|c| (*k, c)))?;
    let log = Log {
        logs: traj.steps.iter().map(|s| &s.metadata.object_log).collect(),
        names: NameTable::for_trajectory(traj),
    };
    let arg = |i: usize| caps.get(i).map(|m| m.as_str());
    let id = |i: usize| arg(i).and_then(|s| log.names.resolve(s)).cloned();
    let yes_no = |b: bool| if b { "yes" } else { "no" }.to_string();
    let last = log.logs.len() - 1;

    match kind {
        Pattern::AnyInRoom | Pattern::HaveSeen => {
            let ty = log.names.type_of(arg(1)?)?;
            let seen = log.logs.iter().any(|l| l.visible.iter().any(|v| v.type_name() == ty));
            Some(yes_no(seen))
        }
        Pattern::WasOpen => {
            let c = id(1)?;
            Some(yes_no(log.logs.iter().any(|l| l.is_open.contains(&c))))
        }
        Pattern::BeforePut => {
            let (x, c) = (id(1)?, id(2)?);
            let puts: Vec<usize> = log
                .puts()
                .into_iter()
                .filter(|(_, o, r)| *o == x && *r == c)
                .map(|(t, ..)| t)
                .collect();
            let [u] = puts.as_slice() else { return None };
            let p = log.picked(&x).into_iter().filter(|p| p < u).max()?;
            log.holder(p - 1, &x).map(|r| log.name(r))
        }
        Pattern::MovedFrom => {
            let (x, src) = (id(1)?, id(2)?);
            let from: Vec<usize> = log
                .picked(&x)
                .into_iter()
                .filter(|&p| log.holder(p - 1, &x) == Some(&src))
                .collect();
            let [p] = from.as_slice() else { return None };
            let u = log.dropped(&x).into_iter().find(|u| u > p)?;
            log.holder(u, &x).map(|r| log.name(r))
        }
        Pattern::WhereNow => {
            let x = id(1)?;
            if log.held(last, &x) {
                return None;
            }
            let u = *log.dropped(&x).last()?;
            log.holder(u, &x).map(|r| log.name(r))
        }
        Pattern::WhatSliced => {
            let sliced: BTreeSet<&ObjectId> = traj
                .steps
                .iter()
                .filter_map(|s| match &s.action {
                    Some(Action::SliceObject(x)) => Some(x),
                    _ => None,
                })
                .collect();
            (!sliced.is_empty()).then(|| log.names.list(sliced))
        }
        Pattern::InWhenSliced => {
            let (c, x) = (id(1)?, id(2)?);
            let t = traj
                .steps
                .iter()
                .position(|s| s.action == Some(Action::SliceObject(x.clone())))?;
            let kids = log.logs[t].recep_objs.get(&c)?;
            kids.contains(&x)
                .then(|| log.names.list(kids.iter().filter(|k| **k != x)))
        }
        Pattern::WereIn => {
            let c = id(1)?;
            let kids = log.logs.iter().find_map(|l| l.recep_objs.get(&c))?;
            Some(log.names.list(kids))
        }
        Pattern::PutIn => {
            let c = id(1)?;
            let into: Vec<ObjectId> = log
                .puts()
                .into_iter()
                .filter(|(_, _, r)| *r == c)
                .map(|(_, x, _)| x)
                .collect();
            let [x] = into.as_slice() else { return None };
            Some(log.name(x))
        }
        Pattern::AreIn => log.logs[last].recep_objs.get(&id(1)?).map(|k| log.names.list(k)),
        Pattern::HowManyIn => log.logs[last].recep_objs.get(&id(1)?).map(|k| k.len().to_string()),
        Pattern::IsIn => {
            let (x, c) = (id(1)?, id(2)?);
            log.logs[last].recep_objs.get(&c).map(|k| yes_no(k.contains(&x)))
        }
        Pattern::TimesMoved => Some(log.picked(&id(1)?).len().to_string()),
    }
}
