//! Continuous arm with a magnet-sphere hand, active in low-level mode.

use super::types::{FailureReason, ObjectId, Parent};
use super::{invalid, Failure, StepResult, WorldState};

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl WorldState {
    /// Arm endpoint in world coordinates (meters).
    pub fn arm_endpoint(&self) -> [f64; 3] {
        let cs = self.params.cell_size;
        let o = self.agent.arm_offset;
        [
            self.agent.cell.x as f64 * cs + o[0],
            self.agent.cell.y as f64 * cs + o[1],
            self.params.arm_base_height + o[2],
        ]
    }

    fn require_low_level(&self) -> Result<(), Failure> {
        if self.low_level {
            Ok(())
        } else {
            Err(invalid("arm control needs low-level mode"))
        }
    }

    pub(crate) fn move_arm(&mut self, delta: [f64; 3]) -> Result<(), Failure> {
        self.require_low_level()?;
        let limit = self.params.arm_step_limit;
        if delta.iter().any(|d| !d.is_finite() || d.abs() > limit) {
            return Err(invalid(format!("arm delta exceeds {limit} m per step")));
        }
        let o = self.agent.arm_offset;
        let next = [o[0] + delta[0], o[1] + delta[1], o[2] + delta[2]];
        if dist(next, [0.0; 3]) > self.params.arm_reach {
            return Err(invalid("arm target beyond reach"));
        }
        self.agent.arm_offset = next;
        self.step += 1;
        Ok(())
    }

    /// Distance from the arm endpoint to an object, `None` when it has no position.
    pub fn hand_distance(&self, id: &ObjectId) -> Option<f64> {
        self.position_of(id).map(|p| dist(p, self.arm_endpoint()))
    }

    pub(crate) fn magnet_grab(&mut self, target: Option<&ObjectId>) -> Result<(), Failure> {
        self.require_low_level()?;
        if let Some(h) = self.held() {
            return Err(invalid(format!("hands are full ({h})")));
        }
        let radius = self.params.magnet_radius;
        let chosen = match target {
            Some(id) => {
                let obj = self
                    .get(id)
                    .ok_or_else(|| invalid(format!("unknown object {id}")))?;
                if !obj.pickupable {
                    return Err(invalid(format!("{id} is not pickupable")));
                }
                if self.in_inventory_subtree(id) {
                    return Err(invalid(format!("{id} is already held")));
                }
                if self.occluded(id) {
                    return Err(invalid(format!("{id} is inside a closed receptacle")));
                }
                match self.hand_distance(id) {
                    Some(d) if d <= radius => id.clone(),
                    _ => return Err(invalid(format!("{id} is outside the magnet radius"))),
                }
            }
            None => {
                let mut best: Option<(f64, ObjectId)> = None;
                for o in self.objects.values().filter(|o| o.pickupable) {
                    if self.in_inventory_subtree(&o.id) || self.occluded(&o.id) {
                        continue;
                    }
                    if let Some(d) = self.hand_distance(&o.id).filter(|d| *d <= radius) {
                        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                            best = Some((d, o.id.clone()));
                        }
                    }
                }
                best.map(|(_, id)| id)
                    .ok_or_else(|| invalid("nothing within the magnet radius"))?
            }
        };
        self.objects.get_mut(&chosen).unwrap().parent = Parent::Inventory;
        self.step += 1;
        Ok(())
    }

    pub(crate) fn magnet_release(&mut self) -> Result<(), Failure> {
        self.require_low_level()?;
        let held = self
            .held()
            .cloned()
            .ok_or_else(|| invalid("nothing is held"))?;
        let radius = self.params.magnet_radius;
        let mut best: Option<(f64, ObjectId)> = None;
        for o in self.objects.values().filter(|o| o.receptacle) {
            if self.check_put(&held, &o.id).is_err() || self.occluded(&o.id) {
                continue;
            }
            if let Some(d) = self.hand_distance(&o.id).filter(|d| *d <= radius) {
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, o.id.clone()));
                }
            }
        }
        let (_, recep) = best.ok_or_else(|| invalid("no receptacle under the hand"))?;
        self.place_held(&held, &recep);
        self.step += 1;
        Ok(())
    }

    /// Magnet-sphere grasp of a specific object: succeeds iff the arm endpoint
    /// is within `magnet_radius` of it.
    pub fn magnet_pickup(&mut self, target: &ObjectId) -> StepResult {
        match self.magnet_grab(Some(target)) {
            Ok(()) => StepResult {
                observation: self.observe(),
                reward: 0.0,
                done: false,
                failure: false,
                failure_reason: FailureReason::None,
                expanded: Vec::new(),
                detail: None,
            },
            Err(f) => self.failed(f),
        }
    }
}
