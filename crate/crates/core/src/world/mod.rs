//! Deterministic symbolic household environment.
//!
//! The room is a grid. Fixed receptacles occupy cells and block movement;
//! every other object lives inside a receptacle (or the agent's inventory) and
//! inherits the cell of its root receptacle. Actions either apply atomically
//! or fail without touching the state.
//!
//! Visibility: an object is visible when its root cell lies within
//! `view_distance` cells of the agent, inside the 90 degree cone around the
//! heading, and no receptacle between it and the root is closed. Interaction
//! (pickup, put, open, close, slice) additionally requires the root cell to be
//! within `interact_distance`, which with the default of 1 means the cell
//! directly ahead.

mod action;
mod arm;
pub mod nav;
mod observe;
mod types;

pub use action::{Action, ActionParseError};
pub use observe::{MetadataEntry, ObjectLog, Observation};
pub use types::{
    AgentPose, Cell, FailureReason, Heading, ObjectId, ObjectInstance, Parent, Pose,
};

use crate::catalog::{self, ApplianceRole, ObjectClass, TypeInfo};
use crate::rng::stream_rng;
use crate::scene::SceneConfig;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("scene config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    /// cells
    pub view_distance: f64,
    /// cells
    pub interact_distance: f64,
    /// meters per grid cell
    pub cell_size: f64,
    pub arm_base_height: f64,
    pub arm_reach: f64,
    pub arm_step_limit: f64,
    pub magnet_radius: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            view_distance: 3.0,
            interact_distance: 1.0,
            cell_size: 0.5,
            arm_base_height: 0.9,
            arm_reach: 1.0,
            arm_step_limit: 0.05,
            magnet_radius: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub scene: String,
    pub width: i32,
    pub depth: i32,
    pub step: usize,
    pub agent: AgentPose,
    pub low_level: bool,
    pub params: WorldParams,
    pub objects: BTreeMap<ObjectId, ObjectInstance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub failure: bool,
    pub failure_reason: FailureReason,
    /// Primitive moves a GotoObject macro expanded into.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expanded: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

pub(crate) struct Failure {
    reason: FailureReason,
    detail: String,
}

fn invalid(detail: impl Into<String>) -> Failure {
    Failure {
        reason: FailureReason::InvalidAction,
        detail: detail.into(),
    }
}

fn type_info(obj_type: &str) -> Result<&'static TypeInfo, WorldError> {
    catalog::builtin()
        .get(obj_type)
        .ok_or_else(|| WorldError::Config(format!("unknown object type `{obj_type}`")))
}

fn instance(id: ObjectId, info: &TypeInfo, parent: Parent, anchor: Option<Cell>) -> ObjectInstance {
    ObjectInstance {
        id,
        obj_type: info.name.clone(),
        pickupable: info.is_pickupable(),
        openable: info.openable,
        sliceable: info.sliceable,
        receptacle: info.is_receptacle(),
        is_open: false,
        is_sliced: false,
        is_clean: false,
        is_hot: false,
        is_cool: false,
        parent,
        anchor,
    }
}

/// Builds the initial state. Identical `(seed, spec)` pairs give identical states.
pub fn init_scene(seed: u64, spec: &SceneConfig) -> Result<WorldState, WorldError> {
    let cfg_err = |m: String| WorldError::Config(m);
    if spec.width <= 0 || spec.depth <= 0 {
        return Err(cfg_err("room dimensions must be positive".into()));
    }
    let mut state = WorldState {
        scene: spec.name.clone(),
        width: spec.width,
        depth: spec.depth,
        step: 0,
        agent: AgentPose {
            cell: spec.agent.cell.into(),
            heading: spec.agent.heading,
            arm_offset: [0.0; 3],
        },
        low_level: spec.low_level,
        params: WorldParams::default(),
        objects: BTreeMap::new(),
    };
    if !state.in_bounds(state.agent.cell) {
        return Err(cfg_err("agent starts outside the room".into()));
    }

    let mut ordinals: BTreeMap<String, usize> = BTreeMap::new();
    let mut next_id = |ty: &str| {
        let n = ordinals.entry(ty.to_string()).or_insert(0);
        *n += 1;
        ObjectId::new(ty, *n)
    };

    // fixed receptacles and their explicit contents
    let mut explicit: Vec<(ObjectId, &str)> = Vec::new();
    for rec in &spec.receptacles {
        let info = type_info(&rec.obj_type)?;
        if info.class != ObjectClass::Fixed {
            return Err(cfg_err(format!("`{}` is not a fixed receptacle", rec.obj_type)));
        }
        let cell = Cell::from(rec.cell);
        if !state.in_bounds(cell) {
            return Err(cfg_err(format!("{} placed outside the room", rec.obj_type)));
        }
        if cell == state.agent.cell || state.fixed_at(cell).is_some() {
            return Err(cfg_err(format!("cell {:?} is already occupied", rec.cell)));
        }
        let id = next_id(&rec.obj_type);
        state
            .objects
            .insert(id.clone(), instance(id.clone(), info, Parent::Floor, Some(cell)));
        for ty in &rec.contents {
            explicit.push((id.clone(), ty.as_str()));
        }
    }
    for (recep, ty) in explicit {
        let info = type_info(ty)?;
        let recep_info = type_info(&state.objects[&recep].obj_type)?;
        if !recep_info.accepts(info) && !(info.class == ObjectClass::Fixture && recep_info.prep == "on") {
            return Err(cfg_err(format!("{recep} cannot hold a {ty}")));
        }
        if state.children(&recep).len() >= recep_info.capacity {
            return Err(cfg_err(format!(
                "{recep} is overfull (capacity {})",
                recep_info.capacity
            )));
        }
        let id = next_id(ty);
        state.objects.insert(
            id.clone(),
            instance(id, info, Parent::Receptacle(recep), None),
        );
    }

    // scattered objects: movable receptacles, then fixtures, then items
    let mut rng = stream_rng(seed, 0);
    for class in [ObjectClass::Movable, ObjectClass::Fixture, ObjectClass::Item] {
        for (ty, &count) in &spec.objects {
            let info = type_info(ty)?;
            if info.class == ObjectClass::Fixed {
                return Err(cfg_err(format!(
                    "fixed receptacle `{ty}` must be listed under [[receptacles]]"
                )));
            }
            if info.class != class {
                continue;
            }
            for _ in 0..count {
                let candidates: Vec<ObjectId> = state
                    .objects
                    .values()
                    .filter(|o| o.receptacle)
                    .filter(|o| {
                        let r = type_info(&o.obj_type).expect("placed types are known");
                        let fits = if class == ObjectClass::Fixture {
                            r.class == ObjectClass::Fixed && !r.openable && r.prep == "on"
                        } else {
                            r.accepts(info)
                        };
                        fits && state.children(&o.id).len() < r.capacity
                    })
                    .map(|o| o.id.clone())
                    .collect();
                if candidates.is_empty() {
                    return Err(cfg_err(format!(
                        "no receptacle has room for another {ty} (overfull assignment)"
                    )));
                }
                let recep = candidates[rng.gen_range(0..candidates.len())].clone();
                let id = next_id(ty);
                state
                    .objects
                    .insert(id.clone(), instance(id, info, Parent::Receptacle(recep), None));
            }
        }
    }

    // every fixed receptacle must be reachable
    let reachable = nav::reachable_cells(&state, state.agent.cell);
    for obj in state.objects.values().filter(|o| o.anchor.is_some()) {
        let pose = nav::interaction_pose(&state, obj.anchor.unwrap());
        match pose {
            Some(p) if reachable.contains(&p.cell) => {}
            _ => return Err(cfg_err(format!("{} cannot be reached", obj.id))),
        }
    }
    Ok(state)
}

impl WorldState {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("world state serializes")
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.depth
    }

    pub fn fixed_at(&self, c: Cell) -> Option<&ObjectInstance> {
        self.objects.values().find(|o| o.anchor == Some(c))
    }

    pub fn is_walkable(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.fixed_at(c).is_none()
    }

    pub fn get(&self, id: &ObjectId) -> Option<&ObjectInstance> {
        self.objects.get(id)
    }

    pub fn type_info(&self, id: &ObjectId) -> Option<&'static TypeInfo> {
        self.objects
            .get(id)
            .and_then(|o| catalog::builtin().get(&o.obj_type))
    }

    /// Direct children of a receptacle, sorted by id.
    pub fn children(&self, id: &ObjectId) -> Vec<ObjectId> {
        self.objects
            .values()
            .filter(|o| matches!(&o.parent, Parent::Receptacle(p) if p == id))
            .map(|o| o.id.clone())
            .collect()
    }

    /// The object held by the agent, if any.
    pub fn held(&self) -> Option<&ObjectId> {
        self.objects
            .values()
            .find(|o| o.parent == Parent::Inventory)
            .map(|o| &o.id)
    }

    /// Chain of receptacles above `id`, innermost first, and the terminal parent.
    pub fn ancestors(&self, id: &ObjectId) -> (Vec<ObjectId>, Parent) {
        let mut chain = Vec::new();
        let mut cur = id;
        loop {
            match &self.objects[cur].parent {
                Parent::Receptacle(p) => {
                    chain.push(p.clone());
                    cur = p;
                    if chain.len() > self.objects.len() {
                        panic!("containment cycle through {id}");
                    }
                }
                terminal => return (chain, terminal.clone()),
            }
        }
    }

    /// Outermost object containing `id` (itself when it has no receptacle parent).
    pub fn root(&self, id: &ObjectId) -> ObjectId {
        let (chain, _) = self.ancestors(id);
        chain.last().cloned().unwrap_or_else(|| id.clone())
    }

    pub fn in_inventory_subtree(&self, id: &ObjectId) -> bool {
        self.ancestors(id).1 == Parent::Inventory
    }

    /// Cell of the object's root receptacle; `None` for carried objects.
    pub fn cell_of(&self, id: &ObjectId) -> Option<Cell> {
        if self.in_inventory_subtree(id) {
            return None;
        }
        self.objects[&self.root(id)].anchor
    }

    /// 3-D position in meters (east, north, up).
    pub fn position_of(&self, id: &ObjectId) -> Option<[f64; 3]> {
        let cell = self.cell_of(id)?;
        let root = self.root(id);
        let h = self.type_info(&root).map_or(0.0, |t| t.height);
        let cs = self.params.cell_size;
        Some([cell.x as f64 * cs, cell.y as f64 * cs, h])
    }

    /// Open receptacles and surfaces are accessible; closed containers are not.
    pub fn is_accessible(&self, id: &ObjectId) -> bool {
        self.objects
            .get(id)
            .is_some_and(|o| o.receptacle && (!o.openable || o.is_open))
    }

    fn occluded(&self, id: &ObjectId) -> bool {
        let (chain, _) = self.ancestors(id);
        chain.iter().any(|p| {
            let o = &self.objects[p];
            o.openable && !o.is_open
        })
    }

    fn cell_in_view(&self, c: Cell) -> bool {
        let a = self.agent.cell;
        let (dx, dy) = (c.x - a.x, c.y - a.y);
        let d2 = dx * dx + dy * dy;
        if d2 == 0 || d2 as f64 > self.params.view_distance.powi(2) {
            return false;
        }
        let (hx, hy) = self.agent.heading.delta();
        let dot = dx * hx + dy * hy;
        dot > 0 && 2 * dot * dot >= d2
    }

    pub fn is_visible(&self, id: &ObjectId) -> bool {
        if !self.objects.contains_key(id) {
            return false;
        }
        match self.cell_of(id) {
            Some(c) => self.cell_in_view(c) && !self.occluded(id),
            None => false,
        }
    }

    pub fn is_interactable(&self, id: &ObjectId) -> bool {
        self.is_visible(id)
            && self.cell_of(id).is_some_and(|c| {
                c.dist2(self.agent.cell) as f64 <= self.params.interact_distance.powi(2)
            })
    }

    pub fn visible_ids(&self) -> Vec<ObjectId> {
        self.objects
            .keys()
            .filter(|id| self.is_visible(id))
            .cloned()
            .collect()
    }

    /// Applies one action. On failure the state is left untouched.
    pub fn step(&mut self, action: &Action) -> StepResult {
        match self.apply(action) {
            Ok(expanded) => StepResult {
                observation: self.observe(),
                reward: 0.0,
                done: false,
                failure: false,
                failure_reason: FailureReason::None,
                expanded,
                detail: None,
            },
            Err(f) => self.failed(f),
        }
    }

    pub(crate) fn failed(&self, f: Failure) -> StepResult {
        StepResult {
            observation: self.observe(),
            reward: 0.0,
            done: true,
            failure: true,
            failure_reason: f.reason,
            expanded: Vec::new(),
            detail: Some(f.detail),
        }
    }

    fn require(&self, id: &ObjectId) -> Result<&ObjectInstance, Failure> {
        self.objects
            .get(id)
            .ok_or_else(|| invalid(format!("unknown object {id}")))
    }

    fn require_reachable(&self, id: &ObjectId) -> Result<&ObjectInstance, Failure> {
        let obj = self.require(id)?;
        if !self.is_visible(id) {
            return Err(invalid(format!("{id} is not visible")));
        }
        if !self.is_interactable(id) {
            return Err(invalid(format!("{id} is out of reach")));
        }
        Ok(obj)
    }

    /// Validates `recep` as a destination for the held object `obj`.
    pub(crate) fn check_put(&self, obj: &ObjectId, recep: &ObjectId) -> Result<(), Failure> {
        let r = self.require(recep)?;
        if !r.receptacle {
            return Err(invalid(format!("{recep} is not a receptacle")));
        }
        if recep == obj || self.in_inventory_subtree(recep) {
            return Err(invalid(format!("cannot put {obj} into {recep}")));
        }
        if !self.is_accessible(recep) {
            return Err(invalid(format!("{recep} is closed")));
        }
        let (ri, oi) = (
            self.type_info(recep).expect("known type"),
            self.type_info(obj).expect("known type"),
        );
        if !ri.accepts(oi) {
            return Err(invalid(format!("{recep} cannot hold {obj}")));
        }
        if self.children(recep).len() >= ri.capacity {
            return Err(invalid(format!("{recep} is full")));
        }
        Ok(())
    }

    pub(crate) fn place_held(&mut self, obj: &ObjectId, recep: &ObjectId) {
        let role = self.type_info(recep).and_then(|t| t.role);
        let o = self.objects.get_mut(obj).expect("held object exists");
        o.parent = Parent::Receptacle(recep.clone());
        match role {
            Some(ApplianceRole::Cleaner) => o.is_clean = true,
            Some(ApplianceRole::Heater) => o.is_hot = true,
            Some(ApplianceRole::Cooler) => o.is_cool = true,
            None => {}
        }
    }

    fn apply(&mut self, action: &Action) -> Result<Vec<Action>, Failure> {
        match action {
            Action::MoveAhead => {
                let next = self.agent.cell.step(self.agent.heading);
                if !self.is_walkable(next) {
                    return Err(Failure {
                        reason: FailureReason::Collision,
                        detail: format!("blocked at ({}, {})", next.x, next.y),
                    });
                }
                self.agent.cell = next;
                self.step += 1;
                Ok(Vec::new())
            }
            Action::RotateLeft => {
                self.agent.heading = self.agent.heading.left();
                self.step += 1;
                Ok(Vec::new())
            }
            Action::RotateRight => {
                self.agent.heading = self.agent.heading.right();
                self.step += 1;
                Ok(Vec::new())
            }
            Action::GotoObject(id) => {
                self.require(id)?;
                let anchor = self
                    .cell_of(id)
                    .ok_or_else(|| invalid(format!("{id} is being carried")))?;
                let target = nav::interaction_pose(self, anchor)
                    .ok_or_else(|| invalid(format!("{id} has no free side")))?;
                let path = nav::shortest_path(self, self.agent.pose(), target)
                    .ok_or_else(|| invalid(format!("no path to {id}")))?;
                self.agent.cell = target.cell;
                self.agent.heading = target.heading;
                self.step += path.len();
                Ok(path)
            }
            Action::PickupObject(id) => {
                let obj = self.require_reachable(id)?;
                if !obj.pickupable {
                    return Err(invalid(format!("{id} is not pickupable")));
                }
                if let Some(h) = self.held() {
                    return Err(invalid(format!("hands are full ({h})")));
                }
                self.objects.get_mut(id).unwrap().parent = Parent::Inventory;
                self.step += 1;
                Ok(Vec::new())
            }
            Action::PutObject(id, recep) => {
                if self.held() != Some(id) {
                    return Err(invalid(format!("{id} is not held")));
                }
                self.require_reachable(recep)?;
                self.check_put(id, recep)?;
                self.place_held(id, recep);
                self.step += 1;
                Ok(Vec::new())
            }
            Action::OpenObject(id) | Action::CloseObject(id) => {
                let opening = matches!(action, Action::OpenObject(_));
                let obj = self.require_reachable(id)?;
                if !obj.openable {
                    return Err(invalid(format!("{id} is not openable")));
                }
                if obj.is_open == opening {
                    return Err(invalid(format!(
                        "{id} is already {}",
                        if opening { "open" } else { "closed" }
                    )));
                }
                self.objects.get_mut(id).unwrap().is_open = opening;
                self.step += 1;
                Ok(Vec::new())
            }
            Action::SliceObject(id) => {
                let obj = self.require_reachable(id)?;
                if !obj.sliceable || obj.is_sliced {
                    return Err(invalid(format!("{id} cannot be sliced")));
                }
                let has_knife = self
                    .held()
                    .and_then(|h| self.type_info(h))
                    .is_some_and(|t| t.knife);
                if !has_knife {
                    return Err(invalid("slicing needs a knife in hand"));
                }
                self.objects.get_mut(id).unwrap().is_sliced = true;
                self.step += 1;
                Ok(Vec::new())
            }
            Action::MoveArm(dx, dy, dz) => self.move_arm([*dx, *dy, *dz]).map(|_| Vec::new()),
            Action::PickupMagnet => self.magnet_grab(None).map(|_| Vec::new()),
            Action::ReleaseMagnet => self.magnet_release().map(|_| Vec::new()),
        }
    }

    /// Checks structural invariants: containment forest, single held object,
    /// flag consistency. Returns the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut held = 0;
        for o in self.objects.values() {
            if o.is_open && !o.openable {
                return Err(format!("{} open but not openable", o.id));
            }
            if o.is_sliced && !o.sliceable {
                return Err(format!("{} sliced but not sliceable", o.id));
            }
            match &o.parent {
                Parent::Inventory => held += 1,
                Parent::Floor => {
                    if o.anchor.is_none() {
                        return Err(format!("{} on the floor without a cell", o.id));
                    }
                }
                Parent::Receptacle(p) => match self.objects.get(p) {
                    Some(r) if r.receptacle => {}
                    _ => return Err(format!("{} has non-receptacle parent {p}", o.id)),
                },
            }
            // walking up must terminate
            let mut cur = &o.id;
            let mut hops = 0;
            while let Parent::Receptacle(p) = &self.objects[cur].parent {
                cur = p;
                hops += 1;
                if hops > self.objects.len() {
                    return Err(format!("containment cycle through {}", o.id));
                }
            }
        }
        if held > 1 {
            return Err(format!("{held} objects in inventory"));
        }
        if !self.in_bounds(self.agent.cell) || !self.is_walkable(self.agent.cell) {
            return Err("agent off the walkable grid".into());
        }
        let off = self.agent.arm_offset;
        if (off[0] * off[0] + off[1] * off[1] + off[2] * off[2]).sqrt()
            > self.params.arm_reach + 1e-9
        {
            return Err("arm beyond reach".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
