//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use forge_core::planner::{check_goal, Goal};
use forge_core::scene::SceneConfig;
use forge_core::world::{init_scene, Action, Heading, ObjectId, WorldState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{HashSet, VecDeque};

/// Search key: everything but the step counter.
fn key(s: &WorldState) -> String {
    serde_json::to_string(&(&s.agent, &s.objects)).unwrap()
}

/// Breadth-first search over world semantics using high-level actions
/// (goto any fixed receptacle, pickup, put, open, close, slice on every
/// object). Returns the minimal number of high-level actions.
pub fn bfs_plan_length(start: &WorldState, goal: &Goal, max_depth: usize) -> Option<usize> {
    if check_goal(start, goal) {
        return Some(0);
    }
    let ids: Vec<ObjectId> = start.objects.keys().cloned().collect();
    let fixed: Vec<ObjectId> = start
        .objects
        .values()
        .filter(|o| o.anchor.is_some())
        .map(|o| o.id.clone())
        .collect();
    let mut actions = Vec::new();
    for f in &fixed {
        actions.push(Action::GotoObject(f.clone()));
    }
    for i in &ids {
        actions.push(Action::PickupObject(i.clone()));
        actions.push(Action::OpenObject(i.clone()));
        actions.push(Action::CloseObject(i.clone()));
        actions.push(Action::SliceObject(i.clone()));
        for r in &ids {
            actions.push(Action::PutObject(i.clone(), r.clone()));
        }
    }
    let mut seen = HashSet::from([key(start)]);
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    while let Some((s, d)) = queue.pop_front() {
        if d >= max_depth {
            continue;
        }
        for a in &actions {
            let mut next = s.clone();
            if next.step(a).failure {
                continue;
            }
            if check_goal(&next, goal) {
                return Some(d + 1);
            }
            if seen.insert(key(&next)) {
                queue.push_back((next, d + 1));
            }
        }
    }
    None
}

const FIXED: [&str; 8] = [
    "CounterTop", "DiningTable", "Fridge", "Microwave", "SinkBasin", "Drawer", "Cabinet", "Shelf",
];
const ITEMS: [&str; 8] = ["Apple", "Tomato", "Knife", "Mug", "Bowl", "Egg", "CreditCard", "DeskLamp"];

/// Random small room with at most `max_objects` objects in total.
pub fn random_small_scene(seed: u64, max_objects: usize) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let (w, h) = (rng.gen_range(4..7), rng.gen_range(4..6));
        let agent = [rng.gen_range(0..w), rng.gen_range(0..h)];
        let heading = *Heading::ALL.choose(&mut rng).unwrap();
        let mut spec = SceneConfig::empty("oracle", w, h, agent, heading);
        let n_fixed = rng.gen_range(2..=4);
        let n_items = rng.gen_range(2..=(max_objects - n_fixed).min(4));
        let mut used = vec![agent];
        for ty in FIXED.choose_multiple(&mut rng, n_fixed) {
            let cell = [rng.gen_range(0..w), rng.gen_range(0..h)];
            if used.contains(&cell) {
                continue;
            }
            used.push(cell);
            spec = spec.with_receptacle(ty, cell, &[]);
        }
        for ty in ITEMS.choose_multiple(&mut rng, n_items) {
            spec = spec.with_objects(ty, 1);
        }
        if let Ok(s) = init_scene(rng.gen(), &spec) {
            if s.objects.len() <= max_objects {
                return s;
            }
        }
    }
}
