//! Task planning: PDDL-lite domain, grounded uniform-cost search and the
//! encoding of world states and template goals into planning problems.
//!
//! The encoding keeps only objects relevant to the goal: the goal objects,
//! knives when slicing is needed, the held object, the containers of all of
//! these, candidate appliances, and the children of any destination that is
//! full. Navigation edges cost the length of the primitive path between
//! interaction poses; search minimizes operator count first and navigation
//! steps second.

pub mod pddl;
pub mod search;
pub mod template;

pub use pddl::{parse_domain, Domain, PddlError};
pub use search::{Atom, GroundAction, Problem, SearchOutcome};
pub use template::{check_goal, sample_goal, Goal, TemplateKind};

use crate::catalog::{ApplianceRole, ObjectClass};
use crate::world::{nav, Action, Cell, ObjectId, Parent, Pose, WorldState};
use search::{FactView, SearchHooks, Searcher};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;
use thiserror::Error;

/// Name of the pseudo-location used when no receptacle is directly ahead.
pub const START: &str = "start";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("goal refers to unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("no plan reaches the goal")]
    Unreachable,
    #[error("search budget exhausted")]
    SearchLimit,
    #[error("plan failed in simulation at action {index}: {detail}")]
    Verification { index: usize, detail: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub goal: Goal,
    pub goal_text: String,
    /// High-level actions; navigation is a single `GotoObject` each.
    pub actions: Vec<Action>,
    /// Length of the primitive-step expansion.
    pub nav_steps: u64,
}

fn shared_domain() -> &'static Domain {
    static D: OnceLock<Domain> = OnceLock::new();
    D.get_or_init(Domain::household)
}

struct WorldHooks<'a> {
    state: &'a WorldState,
    poses: BTreeMap<String, Pose>,
    capacity: BTreeMap<String, (usize, usize)>,
    cache: RefCell<HashMap<(Pose, Pose), Option<u64>>>,
}

impl WorldHooks<'_> {
    fn distance(&self, from: Pose, to: Pose) -> Option<u64> {
        *self
            .cache
            .borrow_mut()
            .entry((from, to))
            .or_insert_with(|| nav::shortest_path(self.state, from, to).map(|p| p.len() as u64))
    }
}

impl SearchHooks for WorldHooks<'_> {
    fn nav_cost(&self, a: &GroundAction, moved: bool) -> Option<u64> {
        if a.operator != "goto" {
            return Some(0);
        }
        let from = if moved {
            *self.poses.get(&a.args[0])?
        } else {
            self.state.agent.pose()
        };
        let to = *self.poses.get(&a.args[1])?;
        self.distance(from, to)
    }

    fn is_nav(&self, operator: &str) -> bool {
        operator == "goto"
    }

    fn allowed(&self, a: &GroundAction, facts: &FactView) -> bool {
        match a.operator.as_str() {
            "goto" => a.args[0] != a.args[1],
            "put" | "put-into" | "clean" | "heat" | "cool" => {
                let target = &a.args[1];
                match self.capacity.get(target) {
                    Some((cap, fixed)) => fixed + facts.count("in", 1, target) < *cap,
                    None => false,
                }
            }
            _ => true,
        }
    }
}

/// Location the agent can interact with right now: the fixed receptacle
/// whose cell is directly ahead.
pub fn current_location(state: &WorldState) -> Option<ObjectId> {
    let ahead = state.agent.cell.step(state.agent.heading);
    state.fixed_at(ahead).map(|o| o.id.clone())
}

fn root_location(state: &WorldState, id: &ObjectId) -> Option<ObjectId> {
    if state.in_inventory_subtree(id) {
        return None;
    }
    let root = state.root(id);
    state.get(&root)?.anchor.map(|_| root)
}

/// Objects the encoding tracks for `goal`.
fn relevant_objects(state: &WorldState, goal: &Goal) -> BTreeSet<ObjectId> {
    let mut rel: BTreeSet<ObjectId> = goal.mentioned().into_iter().cloned().collect();
    let needs_slice = goal.sliced && state.get(&goal.object).is_some_and(|o| !o.is_sliced);
    let role = goal.template.appliance();
    for o in state.objects.values() {
        let info = state.type_info(&o.id);
        let knife = info.is_some_and(|t| t.knife);
        if (needs_slice && knife) || (role.is_some() && info.and_then(|t| t.role) == role) {
            rel.insert(o.id.clone());
        }
    }
    if let Some(h) = state.held() {
        rel.insert(h.clone());
    }
    // destinations that are full must be emptied first
    let dests: Vec<ObjectId> = rel
        .iter()
        .filter(|id| state.get(id).is_some_and(|o| o.receptacle))
        .cloned()
        .collect();
    for d in dests {
        let cap = state.type_info(&d).map_or(0, |t| t.capacity);
        let kids = state.children(&d);
        if kids.len() + 2 > cap {
            rel.extend(kids);
        }
    }
    // containers up to the root
    for id in rel.clone() {
        rel.extend(state.ancestors(&id).0);
    }
    rel
}

/// Builds the planning problem for `goal` from `state`.
pub fn encode(state: &WorldState, goal: &Goal) -> Result<(Problem, BTreeMap<String, Pose>, BTreeMap<String, (usize, usize)>), PlanError> {
    for id in goal.mentioned() {
        if state.get(id).is_none() {
            return Err(PlanError::UnknownObject(id.clone()));
        }
    }
    let rel = relevant_objects(state, goal);
    let mut init = BTreeSet::new();
    let mut poses = BTreeMap::new();
    let mut capacity = BTreeMap::new();
    let mut add = |p: &str, args: &[&str]| {
        init.insert(Atom::new(p, args));
    };

    let mut locations: BTreeSet<ObjectId> = rel.iter().filter_map(|id| root_location(state, id)).collect();
    let here = current_location(state);
    locations.extend(here.clone());
    match &here {
        Some(l) => add("at", &[l.as_str()]),
        None => add("at", &[START]),
    }
    for l in &locations {
        if let Some(pose) = nav::interaction_pose(state, state.get(l).unwrap().anchor.unwrap()) {
            poses.insert(l.0.clone(), pose);
            add("location", &[l.as_str()]);
        }
    }
    if state.held().is_none() {
        add("handempty", &[]);
    }

    let tracked: BTreeSet<&ObjectId> = rel.iter().chain(&locations).collect();
    for id in &tracked {
        let o = state.get(id).unwrap();
        let info = state.type_info(id).unwrap();
        let n = id.as_str();
        match &o.parent {
            Parent::Inventory => add("holding", &[n]),
            Parent::Receptacle(p) if tracked.contains(p) => add("in", &[n, p.as_str()]),
            _ => {}
        }
        if o.pickupable {
            add("pickupable", &[n]);
        }
        if o.sliceable {
            add("sliceable", &[n]);
        }
        if o.is_sliced {
            add("sliced", &[n]);
        }
        if info.knife {
            add("knife", &[n]);
        }
        for (flag, p) in [(o.is_clean, "clean"), (o.is_hot, "hot"), (o.is_cool, "cool")] {
            if flag {
                add(p, &[n]);
            }
        }
        if o.receptacle {
            if o.openable {
                add("openable", &[n]);
                if !o.is_open {
                    add("closed", &[n]);
                }
            }
            if state.is_accessible(id) {
                add("accessible", &[n]);
            }
            if info.class == ObjectClass::Movable {
                add("movable-recep", &[n]);
            } else {
                match info.role {
                    None => add("plain", &[n]),
                    Some(ApplianceRole::Cleaner) => add("cleaner", &[n]),
                    Some(ApplianceRole::Heater) => add("heater", &[n]),
                    Some(ApplianceRole::Cooler) => add("cooler", &[n]),
                }
            }
            let untracked = state
                .children(id)
                .iter()
                .filter(|c| !tracked.contains(c))
                .count();
            capacity.insert(n.to_string(), (info.capacity, untracked));
            for other in &tracked {
                if let Some(oi) = state.type_info(other) {
                    if info.accepts(oi) && *other != *id {
                        add("accepts", &[n, other.as_str()]);
                    }
                }
            }
        }
    }

    let g = |p: &str, args: &[&ObjectId]| Atom {
        predicate: p.to_string(),
        args: args.iter().map(|a| a.0.clone()).collect(),
    };
    let (o, t) = (&goal.object, &goal.target);
    let mut goal_atoms = Vec::new();
    match goal.template {
        TemplateKind::PickAndPlaceSimple => {
            goal_atoms.push(g("in", &[o, t]));
            if goal.sliced {
                goal_atoms.push(g("sliced", &[o]));
            }
        }
        TemplateKind::PickTwoObjAndPlace => {
            goal_atoms.push(g("in", &[o, t]));
            goal_atoms.push(g("in", &[goal.second.as_ref().expect("second slot bound"), t]));
        }
        TemplateKind::PickAndPlaceWithMovableRecep => {
            let v = goal.vessel.as_ref().expect("vessel slot bound");
            goal_atoms.push(g("in", &[o, v]));
            goal_atoms.push(g("in", &[v, t]));
        }
        TemplateKind::PickCleanThenPlace => goal_atoms.extend([g("clean", &[o]), g("in", &[o, t])]),
        TemplateKind::PickHeatThenPlace => goal_atoms.extend([g("hot", &[o]), g("in", &[o, t])]),
        TemplateKind::PickCoolThenPlace => goal_atoms.extend([g("cool", &[o]), g("in", &[o, t])]),
        TemplateKind::LookAtObjInLight => {
            let lamp_loc = root_location(state, t).ok_or(PlanError::Unreachable)?;
            goal_atoms.push(g("holding", &[o]));
            goal_atoms.push(g("at", &[&lamp_loc]));
        }
    }
    let problem = Problem {
        name: format!("{}-{}", goal.template, goal.object),
        init: init.into_iter().collect(),
        goal: goal_atoms,
    };
    Ok((problem, poses, capacity))
}

fn to_action(a: &GroundAction) -> Action {
    let id = |i: usize| ObjectId(a.args[i].clone());
    match a.operator.as_str() {
        "goto" => Action::GotoObject(id(1)),
        "pickup" | "pickup-from" => Action::PickupObject(id(0)),
        "put" | "clean" | "heat" | "cool" | "put-into" => Action::PutObject(id(0), id(1)),
        "open" => Action::OpenObject(id(0)),
        "close" => Action::CloseObject(id(0)),
        "slice" | "slice-in" => Action::SliceObject(id(0)),
        other => unreachable!("operator `{other}` has no world action"),
    }
}

/// Plans `goal` from `state` and verifies the result by simulation.
pub fn plan(state: &WorldState, goal: &Goal) -> Result<Plan, PlanError> {
    let (problem, poses, capacity) = encode(state, goal)?;
    let hooks = WorldHooks {
        state,
        poses,
        capacity,
        cache: RefCell::new(HashMap::new()),
    };
    let mut searcher = Searcher::new(shared_domain(), &hooks);
    let (ground, nav_steps) = match searcher.solve(&problem) {
        SearchOutcome::Found {
            actions, nav_cost, ..
        } => (actions, nav_cost),
        SearchOutcome::Exhausted => return Err(PlanError::Unreachable),
        SearchOutcome::Limit => return Err(PlanError::SearchLimit),
    };
    let actions: Vec<Action> = ground.iter().map(to_action).collect();

    let mut sim = state.clone();
    for (index, a) in actions.iter().enumerate() {
        let r = sim.step(a);
        if r.failure {
            return Err(PlanError::Verification {
                index,
                detail: r.detail.unwrap_or_default(),
            });
        }
    }
    if !check_goal(&sim, goal) {
        return Err(PlanError::Verification {
            index: actions.len(),
            detail: "goal not satisfied after the plan".into(),
        });
    }
    Ok(Plan {
        goal: goal.clone(),
        goal_text: goal.text(),
        actions,
        nav_steps,
    })
}

/// Planning problem in PDDL syntax, for inspection.
pub fn dump_problem(state: &WorldState, goal: &Goal) -> Result<String, PlanError> {
    Ok(encode(state, goal)?.0.to_pddl(&shared_domain().name))
}

/// Cell the agent must face to interact with a fixed receptacle.
pub fn location_cell(state: &WorldState, loc: &ObjectId) -> Option<Cell> {
    state.get(loc)?.anchor
}
