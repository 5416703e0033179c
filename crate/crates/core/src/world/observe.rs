use super::types::{Heading, ObjectId, Parent};
use super::WorldState;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Egocentric symbolic observation. All lists are sorted by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: usize,
    pub visible: Vec<ObjectId>,
    pub inventory: Vec<ObjectId>,
    /// Open state of every visible openable object.
    pub open_states: BTreeMap<ObjectId, bool>,
    /// Contents of visible receptacles that are open or surfaces.
    pub receptacle_contents: BTreeMap<ObjectId, Vec<ObjectId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render: Option<String>,
}

/// Per-step log record in the replay metadata format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataEntry {
    pub img_idx: usize,
    pub img_filename: String,
    pub step: usize,
    pub object_log: ObjectLog,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectLog {
    pub visible: Vec<ObjectId>,
    pub pickupable: Vec<ObjectId>,
    #[serde(rename = "isOpen")]
    pub is_open: Vec<ObjectId>,
    pub inven_obj: Vec<ObjectId>,
    pub receptacles: Vec<ObjectId>,
    pub recep_objs: BTreeMap<ObjectId, Vec<ObjectId>>,
}

impl Observation {
    pub fn metadata(&self, state: &WorldState) -> MetadataEntry {
        let flag = |f: fn(&super::ObjectInstance) -> bool| -> Vec<ObjectId> {
            self.visible
                .iter()
                .filter(|id| state.get(id).is_some_and(f))
                .cloned()
                .collect()
        };
        MetadataEntry {
            img_idx: self.step + 1,
            img_filename: format!("{:09}.png", self.step + 1),
            step: self.step,
            object_log: ObjectLog {
                visible: self.visible.clone(),
                pickupable: flag(|o| o.pickupable),
                is_open: self
                    .open_states
                    .iter()
                    .filter(|(_, open)| **open)
                    .map(|(id, _)| id.clone())
                    .collect(),
                inven_obj: self.inventory.clone(),
                receptacles: flag(|o| o.receptacle),
                recep_objs: self.receptacle_contents.clone(),
            },
        }
    }
}

impl WorldState {
    pub fn observe(&self) -> Observation {
        let visible = self.visible_ids();
        let mut open_states = BTreeMap::new();
        let mut receptacle_contents = BTreeMap::new();
        for id in &visible {
            let o = &self.objects[id];
            if o.openable {
                open_states.insert(id.clone(), o.is_open);
            }
            if self.is_accessible(id) {
                receptacle_contents.insert(id.clone(), self.children(id));
            }
        }
        Observation {
            step: self.step,
            visible,
            inventory: self
                .objects
                .values()
                .filter(|o| o.parent == Parent::Inventory)
                .map(|o| o.id.clone())
                .collect(),
            open_states,
            receptacle_contents,
            render: None,
        }
    }

    /// Metadata record for the current state.
    pub fn metadata(&self) -> MetadataEntry {
        self.observe().metadata(self)
    }

    /// Top-down ASCII map, north up. `#` receptacle, arrow for the agent.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for y in (0..self.depth).rev() {
            for x in 0..self.width {
                let c = super::Cell::new(x, y);
                let ch = if c == self.agent.cell {
                    match self.agent.heading {
                        Heading::N => '^',
                        Heading::E => '>',
                        Heading::S => 'v',
                        Heading::W => '<',
                    }
                } else if self.fixed_at(c).is_some() {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}
