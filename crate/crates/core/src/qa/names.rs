use crate::catalog::{self, humanize};
use crate::traj::Trajectory;
use crate::world::ObjectId;
use std::collections::{BTreeMap, BTreeSet};

/// Spoken names for every object that appears in a trajectory's metadata.
///
/// A type with one observed instance is named by its type (`apple`); types
/// with several are numbered by id suffix (`apple 2`).
#[derive(Clone, Debug, Default)]
pub struct NameTable {
    by_id: BTreeMap<ObjectId, String>,
    by_name: BTreeMap<String, ObjectId>,
    types: BTreeMap<String, String>,
}

impl NameTable {
    pub fn for_trajectory(traj: &Trajectory) -> Self {
        let mut ids = BTreeSet::new();
        for s in &traj.steps {
            let log = &s.metadata.object_log;
            ids.extend(log.visible.iter().cloned());
            ids.extend(log.inven_obj.iter().cloned());
            for (r, kids) in &log.recep_objs {
                ids.insert(r.clone());
                ids.extend(kids.iter().cloned());
            }
        }
        Self::new(ids)
    }

    pub fn new(ids: impl IntoIterator<Item = ObjectId>) -> Self {
        let ids: BTreeSet<ObjectId> = ids.into_iter().collect();
        let mut per_type: BTreeMap<&str, usize> = BTreeMap::new();
        for id in &ids {
            *per_type.entry(id.type_name()).or_default() += 1;
        }
        let mut t = NameTable::default();
        for id in &ids {
            let ty = id.type_name();
            let base = humanize(ty);
            t.types.insert(base.clone(), ty.to_string());
            let name = if per_type[ty] == 1 {
                base
            } else {
                let n = id.as_str()[ty.len()..].trim_start_matches(['_', '0']);
                format!("{base} {n}")
            };
            t.by_name.insert(name.clone(), id.clone());
            t.by_id.insert(id.clone(), name);
        }
        t
    }

    pub fn name(&self, id: &ObjectId) -> Option<&str> {
        self.by_id.get(id).map(String::as_str)
    }

    pub fn resolve(&self, name: &str) -> Option<&ObjectId> {
        self.by_name.get(name)
    }

    /// Type name for a humanized type (`counter top` -> `CounterTop`).
    pub fn type_of(&self, spoken: &str) -> Option<&str> {
        self.types.get(spoken).map(String::as_str)
    }

    /// Sorted, comma-separated names; `nothing` when empty.
    pub fn list<'a>(&self, ids: impl IntoIterator<Item = &'a ObjectId>) -> String {
        let mut names: Vec<&str> = ids.into_iter().filter_map(|i| self.name(i)).collect();
        if names.is_empty() {
            return "nothing".into();
        }
        names.sort_unstable();
        names.join(", ")
    }
}

/// `in` or `on` for a receptacle.
pub fn prep(id: &ObjectId) -> &'static str {
    catalog::builtin().get(id.type_name()).map_or("in", |t| t.prep)
}

pub fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}
