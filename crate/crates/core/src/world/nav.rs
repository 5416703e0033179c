//! Grid navigation over agent poses.

use super::action::Action;
use super::types::{Cell, Heading, Pose};
use super::WorldState;
use std::collections::{HashMap, VecDeque};

/// Pose from which a fixed receptacle at `anchor` is interacted with: the
/// first walkable neighbour in the order south, west, east, north, facing
/// the anchor.
pub fn interaction_pose(state: &WorldState, anchor: Cell) -> Option<Pose> {
    let candidates = [
        (Cell::new(anchor.x, anchor.y - 1), Heading::N),
        (Cell::new(anchor.x - 1, anchor.y), Heading::E),
        (Cell::new(anchor.x + 1, anchor.y), Heading::W),
        (Cell::new(anchor.x, anchor.y + 1), Heading::S),
    ];
    candidates
        .into_iter()
        .find(|(c, _)| state.is_walkable(*c))
        .map(|(cell, heading)| Pose { cell, heading })
}

fn successors(state: &WorldState, pose: Pose) -> [(Action, Option<Pose>); 3] {
    let ahead = pose.cell.step(pose.heading);
    [
        (
            Action::MoveAhead,
            state.is_walkable(ahead).then_some(Pose {
                cell: ahead,
                heading: pose.heading,
            }),
        ),
        (
            Action::RotateLeft,
            Some(Pose {
                cell: pose.cell,
                heading: pose.heading.left(),
            }),
        ),
        (
            Action::RotateRight,
            Some(Pose {
                cell: pose.cell,
                heading: pose.heading.right(),
            }),
        ),
    ]
}

/// Shortest primitive action sequence from `from` to `to`. Ties are broken
/// by expanding MoveAhead, RotateLeft, RotateRight in that order.
pub fn shortest_path(state: &WorldState, from: Pose, to: Pose) -> Option<Vec<Action>> {
    if from == to {
        return Some(Vec::new());
    }
    let mut prev: HashMap<Pose, (Pose, Action)> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    prev.insert(from, (from, Action::MoveAhead));
    while let Some(pose) = queue.pop_front() {
        for (action, next) in successors(state, pose) {
            let Some(next) = next else { continue };
            if prev.contains_key(&next) {
                continue;
            }
            prev.insert(next, (pose, action));
            if next == to {
                let mut path = Vec::new();
                let mut cur = next;
                while cur != from {
                    let (p, a) = prev[&cur].clone();
                    path.push(a);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(next);
        }
    }
    None
}

/// Cells reachable from `start` by walking.
pub fn reachable_cells(state: &WorldState, start: Cell) -> Vec<Cell> {
    let mut seen = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for h in Heading::ALL {
            let n = c.step(h);
            if state.is_walkable(n) && !seen.contains(&n) {
                seen.push(n);
                queue.push_back(n);
            }
        }
    }
    seen
}
