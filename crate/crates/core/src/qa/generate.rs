use super::names::{article, prep, NameTable};
use super::{EvidenceClass, QaInstance, QaType};
use crate::catalog::humanize;
use crate::rng::stream_rng;
use crate::traj::{ReplayError, Trajectory};
use crate::world::{Action, ObjectId, Parent, WorldState};
use rand::seq::IteratorRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

struct Pickup {
    step: usize,
    obj: ObjectId,
    from: ObjectId,
}

struct Put {
    step: usize,
    obj: ObjectId,
    into: ObjectId,
}

struct Builder<'a> {
    traj: &'a Trajectory,
    names: NameTable,
    out: Vec<QaInstance>,
}

impl Builder<'_> {
    fn n<'s>(&'s self, id: &'s ObjectId) -> &'s str {
        self.names.name(id).unwrap_or(id.as_str())
    }

    fn push(&mut self, qa_type: QaType, subject: &str, question: String, answer: String, gt: Vec<usize>) {
        debug_assert!(gt.windows(2).all(|w| w[0] < w[1]), "{question}: {gt:?}");
        let evidence_class = if gt.len() >= 2 {
            EvidenceClass::Multi
        } else {
            EvidenceClass::Single
        };
        self.out.push(QaInstance {
            id: format!("{}:{:05}", self.traj.id, self.out.len()),
            trajectory_id: self.traj.id.clone(),
            question,
            answer,
            qa_type,
            obj_type: subject.to_string(),
            gt_steps: gt,
            evidence_class,
        });
    }
}

fn parent_recep(state: &WorldState, id: &ObjectId) -> Option<ObjectId> {
    match &state.get(id)?.parent {
        Parent::Receptacle(r) => Some(r.clone()),
        _ => None,
    }
}

/// Open receptacles and surfaces in view, with their contents.
fn shown_contents(state: &WorldState) -> BTreeMap<ObjectId, Vec<ObjectId>> {
    state
        .visible_ids()
        .into_iter()
        .filter(|id| state.is_accessible(id))
        .map(|id| {
            let kids = state.children(&id);
            (id, kids)
        })
        .collect()
}

/// Rule-based questions over one trajectory. The world is re-simulated so
/// that answers come from object state rather than from the logged metadata.
pub fn generate_qa(traj: &Trajectory, seed: u64) -> Result<Vec<QaInstance>, ReplayError> {
    let mut states = vec![traj.initial_state().map_err(ReplayError::Scene)?];
    for rec in &traj.steps[1..] {
        let a = rec.action.as_ref().ok_or(ReplayError::MissingAction(rec.step))?;
        let mut s = states.last().unwrap().clone();
        if s.step(a).failure {
            return Err(ReplayError::Failure(rec.step));
        }
        states.push(s);
    }
    let last = states.len() - 1;
    let mut rng = stream_rng(seed, 2);
    let mut b = Builder {
        traj,
        names: NameTable::for_trajectory(traj),
        out: Vec::new(),
    };

    presence(&mut b, &states, &mut rng);
    open_state(&mut b, &states);

    let mut pickups = Vec::new();
    let mut puts = Vec::new();
    let mut slices = Vec::new();
    for (t, rec) in traj.steps.iter().enumerate().skip(1) {
        match rec.action.as_ref() {
            Some(Action::PickupObject(x)) => {
                if let Some(from) = parent_recep(&states[t - 1], x) {
                    pickups.push(Pickup { step: t, obj: x.clone(), from });
                }
            }
            Some(Action::PutObject(x, r)) => puts.push(Put {
                step: t,
                obj: x.clone(),
                into: r.clone(),
            }),
            Some(Action::SliceObject(x)) => slices.push((t, x.clone())),
            _ => {}
        }
    }

    location_trace(&mut b, &pickups, &puts);
    put_action(&mut b, &puts);
    movement_count(&mut b, &pickups);
    slicing(&mut b, &states, &slices);
    container_content(&mut b, &states);
    final_state(&mut b, &states[last], last, &mut rng);
    Ok(b.out)
}

fn presence(b: &mut Builder, states: &[WorldState], rng: &mut ChaCha8Rng) {
    let mut first: BTreeMap<String, usize> = BTreeMap::new();
    for (t, s) in states.iter().enumerate() {
        for id in s.visible_ids() {
            first.entry(id.type_name().to_string()).or_insert(t);
        }
    }
    for (ty, t) in first {
        let obj = humanize(&ty);
        let q = if rng.gen_bool(0.5) {
            format!("Is there any {obj} in this room?")
        } else {
            format!("Have you seen {} {obj}?", article(&obj))
        };
        b.push(QaType::Presence, &ty, q, "yes".into(), vec![t]);
    }
}

fn open_state(b: &mut Builder, states: &[WorldState]) {
    let mut first: BTreeMap<ObjectId, usize> = BTreeMap::new();
    for (t, s) in states.iter().enumerate() {
        for id in s.visible_ids() {
            let o = s.get(&id).unwrap();
            if o.openable && o.is_open {
                first.entry(id).or_insert(t);
            }
        }
    }
    for (c, t) in first {
        let q = format!("Was the {} open?", b.n(&c));
        b.push(QaType::OpenState, c.type_name(), q, "yes".into(), vec![t]);
    }
}

fn location_trace(b: &mut Builder, pickups: &[Pickup], puts: &[Put]) {
    let count = |pairs: &mut dyn Iterator<Item = (&ObjectId, &ObjectId)>| {
        let mut m: BTreeMap<(ObjectId, ObjectId), usize> = BTreeMap::new();
        for (a, c) in pairs {
            *m.entry((a.clone(), c.clone())).or_default() += 1;
        }
        m
    };
    let put_pairs = count(&mut puts.iter().map(|p| (&p.obj, &p.into)));
    let pick_pairs = count(&mut pickups.iter().map(|p| (&p.obj, &p.from)));

    for put in puts {
        let Some(pick) = pickups
            .iter()
            .rev()
            .find(|p| p.obj == put.obj && p.step < put.step)
        else {
            continue;
        };
        let gt = vec![pick.step - 1, put.step];
        let (x, src, dst) = (b.n(&put.obj).to_string(), b.n(&pick.from).to_string(), b.n(&put.into).to_string());
        if put_pairs[&(put.obj.clone(), put.into.clone())] == 1 {
            let q = format!("Where was the {x} before you put it to the {dst}?");
            b.push(QaType::LocationTrace, put.obj.type_name(), q, src.clone(), gt.clone());
        }
        if pick_pairs[&(pick.obj.clone(), pick.from.clone())] == 1 {
            let q = format!("Where did you move the {x} from the {src}?");
            b.push(QaType::LocationTrace, put.obj.type_name(), q, dst, gt);
        }
    }

    let mut last_put: BTreeMap<&ObjectId, &Put> = BTreeMap::new();
    for put in puts {
        last_put.insert(&put.obj, put);
    }
    for (x, put) in last_put {
        if pickups.iter().any(|p| &p.obj == x && p.step > put.step) {
            continue;
        }
        let q = format!("Where is the {} now?", b.n(x));
        let a = b.n(&put.into).to_string();
        b.push(QaType::LocationTrace, x.type_name(), q, a, vec![put.step]);
    }
}

fn put_action(b: &mut Builder, puts: &[Put]) {
    let mut by_dest: BTreeMap<&ObjectId, Vec<&Put>> = BTreeMap::new();
    for p in puts {
        by_dest.entry(&p.into).or_default().push(p);
    }
    for (c, ps) in by_dest {
        if let [p] = ps.as_slice() {
            let q = format!("What object did you put {} the {}?", prep(c), b.n(c));
            let a = b.n(&p.obj).to_string();
            b.push(QaType::PutAction, p.obj.type_name(), q, a, vec![p.step]);
        }
    }
}

fn movement_count(b: &mut Builder, pickups: &[Pickup]) {
    let mut by_obj: BTreeMap<&ObjectId, Vec<usize>> = BTreeMap::new();
    for p in pickups {
        by_obj.entry(&p.obj).or_default().push(p.step);
    }
    for (x, steps) in by_obj {
        if steps.len() > 1 {
            let q = format!("How many times did you move the {}?", b.n(x));
            b.push(QaType::MovementCount, x.type_name(), q, steps.len().to_string(), steps);
        }
    }
}

fn slicing(b: &mut Builder, states: &[WorldState], slices: &[(usize, ObjectId)]) {
    if slices.is_empty() {
        return;
    }
    let sliced: BTreeSet<&ObjectId> = slices.iter().map(|(_, x)| x).collect();
    let a = b.names.list(sliced.iter().copied());
    let gt = slices.iter().map(|(t, _)| *t).collect();
    let subject = slices[0].1.type_name();
    b.push(QaType::Slicing, subject, "What did you slice?".into(), a, gt);

    for (t, x) in slices {
        let s = &states[*t];
        let Some(c) = parent_recep(s, x) else { continue };
        if !(s.is_visible(&c) && s.is_accessible(&c)) || slices.iter().filter(|(_, y)| y == x).count() > 1 {
            continue;
        }
        let others: Vec<ObjectId> = s.children(&c).into_iter().filter(|k| k != x).collect();
        let q = format!(
            "What objects were {} the {} when you slice the {}?",
            prep(&c),
            b.n(&c),
            b.n(x)
        );
        let a = b.names.list(&others);
        b.push(QaType::Slicing, x.type_name(), q, a, vec![*t]);
    }
}

fn container_content(b: &mut Builder, states: &[WorldState]) {
    let mut seen: BTreeMap<ObjectId, (usize, Vec<ObjectId>, bool)> = BTreeMap::new();
    for (t, s) in states.iter().enumerate() {
        for (c, kids) in shown_contents(s) {
            match seen.get_mut(&c) {
                None => {
                    seen.insert(c, (t, kids, true));
                }
                Some((_, first, stable)) => *stable &= *first == kids,
            }
        }
    }
    for (c, (t, kids, stable)) in seen {
        if !stable || kids.is_empty() {
            continue;
        }
        let q = format!("What objects were {} the {}?", prep(&c), b.n(&c));
        let a = b.names.list(&kids);
        b.push(QaType::ContainerContent, c.type_name(), q, a, vec![t]);
    }
}

fn final_state(b: &mut Builder, end: &WorldState, t: usize, rng: &mut ChaCha8Rng) {
    let shown = shown_contents(end);
    for (c, kids) in &shown {
        if kids.is_empty() {
            continue;
        }
        let (p, cn) = (prep(c), b.n(c).to_string());
        let q = format!("What objects are {p} the {cn}?");
        let a = b.names.list(kids);
        b.push(QaType::FinalState, c.type_name(), q, a, vec![t]);
        let q = format!("How many objects were {p} the {cn}?");
        b.push(QaType::FinalState, c.type_name(), q, kids.len().to_string(), vec![t]);
        for x in kids {
            let q = format!("Is the {} {p} the {cn}?", b.n(x));
            b.push(QaType::FinalState, x.type_name(), q, "yes".into(), vec![t]);
        }
        let elsewhere = shown
            .iter()
            .filter(|(d, _)| *d != c)
            .flat_map(|(_, ks)| ks.iter())
            .filter(|x| !kids.contains(x) && !end.ancestors(x).0.contains(c))
            .choose(rng);
        if let Some(x) = elsewhere {
            let q = format!("Is the {} {p} the {cn}?", b.n(x));
            b.push(QaType::FinalState, x.type_name(), q, "no".into(), vec![t]);
        }
    }
}
