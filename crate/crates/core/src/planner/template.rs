//! Task templates, their goal predicates and goal sentences.

use crate::catalog::{self, humanize, ApplianceRole, ObjectClass};
use crate::world::{ObjectId, ObjectInstance, Parent, WorldState};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    PickAndPlaceSimple,
    PickTwoObjAndPlace,
    PickAndPlaceWithMovableRecep,
    PickCleanThenPlace,
    PickHeatThenPlace,
    PickCoolThenPlace,
    LookAtObjInLight,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 7] = [
        TemplateKind::PickAndPlaceSimple,
        TemplateKind::PickTwoObjAndPlace,
        TemplateKind::PickAndPlaceWithMovableRecep,
        TemplateKind::PickCleanThenPlace,
        TemplateKind::PickHeatThenPlace,
        TemplateKind::PickCoolThenPlace,
        TemplateKind::LookAtObjInLight,
    ];

    /// Templates usable as the final goal: a single pick object and a
    /// destination receptacle.
    pub const FINAL: [TemplateKind; 4] = [
        TemplateKind::PickAndPlaceSimple,
        TemplateKind::PickCleanThenPlace,
        TemplateKind::PickHeatThenPlace,
        TemplateKind::PickCoolThenPlace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::PickAndPlaceSimple => "pick_and_place_simple",
            TemplateKind::PickTwoObjAndPlace => "pick_two_obj_and_place",
            TemplateKind::PickAndPlaceWithMovableRecep => "pick_and_place_with_movable_recep",
            TemplateKind::PickCleanThenPlace => "pick_clean_then_place",
            TemplateKind::PickHeatThenPlace => "pick_heat_then_place",
            TemplateKind::PickCoolThenPlace => "pick_cool_then_place",
            TemplateKind::LookAtObjInLight => "look_at_obj_in_light",
        }
    }

    pub fn appliance(self) -> Option<ApplianceRole> {
        match self {
            TemplateKind::PickCleanThenPlace => Some(ApplianceRole::Cleaner),
            TemplateKind::PickHeatThenPlace => Some(ApplianceRole::Heater),
            TemplateKind::PickCoolThenPlace => Some(ApplianceRole::Cooler),
            _ => None,
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

/// A grounded template instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub template: TemplateKind,
    pub object: ObjectId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<ObjectId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vessel: Option<ObjectId>,
    /// Destination receptacle; the lamp for `look_at_obj_in_light`.
    pub target: ObjectId,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub sliced: bool,
}

impl Goal {
    pub fn simple(object: &str, target: &str) -> Self {
        Self {
            template: TemplateKind::PickAndPlaceSimple,
            object: ObjectId(object.into()),
            second: None,
            vessel: None,
            target: ObjectId(target.into()),
            sliced: false,
        }
    }

    pub fn with_template(mut self, template: TemplateKind) -> Self {
        self.template = template;
        self
    }

    pub fn mentioned(&self) -> Vec<&ObjectId> {
        let mut ids = vec![&self.object];
        ids.extend(self.second.as_ref());
        ids.extend(self.vessel.as_ref());
        ids.push(&self.target);
        ids
    }

    /// Natural-language instruction, e.g. "Put the tomato on the counter top".
    pub fn text(&self) -> String {
        let name = |id: &ObjectId| humanize(id.type_name());
        let prep = |id: &ObjectId| {
            catalog::builtin()
                .get(id.type_name())
                .map_or("in", |t| t.prep)
        };
        let obj = name(&self.object);
        let tgt = name(&self.target);
        let p = prep(&self.target);
        match self.template {
            TemplateKind::PickAndPlaceSimple if self.sliced => {
                format!("Put the sliced {obj} {p} the {tgt}")
            }
            TemplateKind::PickAndPlaceSimple => format!("Put the {obj} {p} the {tgt}"),
            TemplateKind::PickTwoObjAndPlace => {
                let second = self.second.as_ref().map(name).unwrap_or_default();
                format!("Put the {obj} and the {second} {p} the {tgt}")
            }
            TemplateKind::PickAndPlaceWithMovableRecep => {
                let v = self.vessel.as_ref().expect("vessel slot bound");
                format!(
                    "Put the {obj} {} the {}, then put the {} {p} the {tgt}",
                    prep(v),
                    name(v),
                    name(v)
                )
            }
            TemplateKind::PickCleanThenPlace => format!("Clean the {obj} and put it {p} the {tgt}"),
            TemplateKind::PickHeatThenPlace => format!("Heat the {obj} and put it {p} the {tgt}"),
            TemplateKind::PickCoolThenPlace => format!("Cool the {obj} and put it {p} the {tgt}"),
            TemplateKind::LookAtObjInLight => format!("Look at the {obj} under the {tgt}"),
        }
    }
}

fn in_recep(state: &WorldState, obj: &ObjectId, recep: &ObjectId) -> bool {
    state
        .get(obj)
        .is_some_and(|o| o.parent == Parent::Receptacle(recep.clone()))
}

/// Goal predicate over a world state. Unknown ids make it false.
pub fn check_goal(state: &WorldState, goal: &Goal) -> bool {
    let Some(obj) = state.get(&goal.object) else {
        return false;
    };
    if state.get(&goal.target).is_none() {
        return false;
    }
    let placed = in_recep(state, &goal.object, &goal.target);
    match goal.template {
        TemplateKind::PickAndPlaceSimple => placed && (!goal.sliced || obj.is_sliced),
        TemplateKind::PickTwoObjAndPlace => {
            placed
                && goal
                    .second
                    .as_ref()
                    .is_some_and(|s| s != &goal.object && in_recep(state, s, &goal.target))
        }
        TemplateKind::PickAndPlaceWithMovableRecep => goal.vessel.as_ref().is_some_and(|v| {
            in_recep(state, &goal.object, v) && in_recep(state, v, &goal.target)
        }),
        TemplateKind::PickCleanThenPlace => placed && obj.is_clean,
        TemplateKind::PickHeatThenPlace => placed && obj.is_hot,
        TemplateKind::PickCoolThenPlace => placed && obj.is_cool,
        TemplateKind::LookAtObjInLight => {
            let ahead = state.agent.cell.step(state.agent.heading);
            state.held() == Some(&goal.object)
                && state.is_visible(&goal.target)
                && state.cell_of(&goal.target) == Some(ahead)
        }
    }
}

fn is_item(o: &ObjectInstance) -> bool {
    catalog::builtin()
        .get(&o.obj_type)
        .is_some_and(|t| t.class == ObjectClass::Item)
}

fn accepts(state: &WorldState, recep: &ObjectId, obj: &ObjectId) -> bool {
    match (state.type_info(recep), state.type_info(obj)) {
        (Some(r), Some(o)) => r.accepts(o),
        _ => false,
    }
}

/// Draws slot bindings for `kind` from the current state. Returns `None`
/// when the scene offers no binding at all. The goal may turn out to be
/// already satisfied or unplannable; callers re-sample.
pub fn sample_goal<R: Rng>(state: &WorldState, kind: TemplateKind, rng: &mut R) -> Option<Goal> {
    let items: Vec<&ObjectInstance> = state
        .objects
        .values()
        .filter(|o| is_item(o) && !state.in_inventory_subtree(&o.id))
        .collect();
    let fixed: Vec<&ObjectInstance> = state.objects.values().filter(|o| o.anchor.is_some()).collect();
    let role_of = |id: &ObjectId| state.type_info(id).and_then(|t| t.role);

    let obj = (*items.choose(rng)?).id.clone();
    let mut goal = Goal {
        template: kind,
        object: obj.clone(),
        second: None,
        vessel: None,
        target: obj.clone(),
        sliced: false,
    };
    let dest_for = |o: &ObjectId, rng: &mut R, exclude_role: Option<ApplianceRole>| {
        let c: Vec<&ObjectId> = fixed
            .iter()
            .map(|r| &r.id)
            .filter(|r| accepts(state, r, o))
            .filter(|r| exclude_role.is_none() || role_of(r) != exclude_role)
            .collect();
        c.choose(rng).map(|r| (*r).clone())
    };

    match kind {
        TemplateKind::PickAndPlaceSimple => {
            goal.target = dest_for(&obj, rng, None)?;
            let o = state.get(&obj)?;
            let has_knife = state
                .objects
                .values()
                .any(|k| state.type_info(&k.id).is_some_and(|t| t.knife));
            goal.sliced = o.sliceable && !o.is_sliced && has_knife && rng.gen_bool(0.3);
        }
        TemplateKind::PickTwoObjAndPlace => {
            let others: Vec<&ObjectId> = items.iter().map(|o| &o.id).filter(|o| **o != obj).collect();
            let second = (*others.choose(rng)?).clone();
            let c: Vec<&ObjectId> = fixed
                .iter()
                .map(|r| &r.id)
                .filter(|r| accepts(state, r, &obj) && accepts(state, r, &second))
                .collect();
            goal.target = (*c.choose(rng)?).clone();
            goal.second = Some(second);
        }
        TemplateKind::PickAndPlaceWithMovableRecep => {
            let vessels: Vec<&ObjectId> = state
                .objects
                .values()
                .filter(|v| {
                    v.receptacle && v.pickupable && !state.in_inventory_subtree(&v.id)
                })
                .map(|v| &v.id)
                .filter(|v| accepts(state, v, &obj))
                .collect();
            let vessel = (*vessels.choose(rng)?).clone();
            goal.target = dest_for(&vessel, rng, None)?;
            goal.vessel = Some(vessel);
        }
        TemplateKind::PickCleanThenPlace
        | TemplateKind::PickHeatThenPlace
        | TemplateKind::PickCoolThenPlace => {
            let role = kind.appliance();
            let has_appliance = fixed
                .iter()
                .any(|r| role_of(&r.id) == role && accepts(state, &r.id, &obj));
            if !has_appliance {
                return None;
            }
            goal.target = dest_for(&obj, rng, role)?;
        }
        TemplateKind::LookAtObjInLight => {
            let lamps: Vec<&ObjectId> = state
                .objects
                .values()
                .filter(|l| state.type_info(&l.id).is_some_and(|t| t.lamp))
                .map(|l| &l.id)
                .collect();
            goal.target = (*lamps.choose(rng)?).clone();
        }
    }
    Some(goal)
}
