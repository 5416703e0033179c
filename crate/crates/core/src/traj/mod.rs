//! Long-horizon trajectory generation.
//!
//! A trajectory chains planner-verified sub-goal rollouts in one scene. After
//! the last sub-goal a final goal is drawn whose pick object was first seen
//! in the early window of the trajectory and whose destination was first seen
//! in the late window.
//!
//! To keep the late window non-empty, one hard-to-see fixed receptacle is
//! reserved up front: rollouts of all but the last sub-goal that would bring
//! it into view are discarded and re-sampled, and the last sub-goal must
//! reveal it inside the late window.

mod io;
mod tokens;

pub use io::{
    export_dataset, load_dir, load_trajectory, manifest_for, read_trajectory, write_trajectory,
    DatasetManifest, TrajectoryHeader, TRAJ_FORMAT,
};
pub use tokens::{goal_tokens, token_length, token_model, TokenModel, TOKEN_MODELS};

use crate::planner::{self, Goal, Plan, TemplateKind};
use crate::rng::stream_rng;
use crate::scene::SceneConfig;
use crate::world::{init_scene, Action, MetadataEntry, ObjectId, WorldError, WorldState};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub max_sub_goals: usize,
    pub early_frac: f64,
    pub late_frac: f64,
    pub tokens_per_image: u64,
    pub text_tokens_per_step: u64,
    pub seed: u64,
    /// Re-samples allowed per sampling loop before giving up.
    pub retry_budget: usize,
    pub templates: Vec<TemplateKind>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            max_sub_goals: 5,
            early_frac: 0.2,
            late_frac: 0.2,
            tokens_per_image: 121,
            text_tokens_per_step: 8,
            seed: 0,
            retry_budget: 200,
            templates: TemplateKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("template pool is empty")]
    EmptyPool,
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] WorldError),
    #[error("gave up after {attempts} re-samples while {stage}")]
    GiveUp { stage: String, attempts: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// `None` for the initial observation.
    pub action: Option<Action>,
    /// Index of the sub-goal this step belongs to.
    pub sub_goal: Option<usize>,
    pub metadata: MetadataEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubGoal {
    pub plan: Plan,
    /// First and last step index of the rollout, inclusive.
    pub start_step: usize,
    pub end_step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalGoal {
    pub plan: Plan,
    pub pick_first_seen: usize,
    pub target_first_seen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub seed: u64,
    pub scene: SceneConfig,
    pub sub_goals: Vec<SubGoal>,
    pub final_goal: FinalGoal,
    pub steps: Vec<StepRecord>,
    pub token_length: u64,
    pub tokens_per_image: u64,
    pub text_tokens_per_step: u64,
    pub early_frac: f64,
    pub late_frac: f64,
}

impl Trajectory {
    /// Number of action steps (the initial observation is step 0).
    pub fn total_steps(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn first_seen(&self) -> BTreeMap<ObjectId, usize> {
        first_seen(&self.steps)
    }

    /// All goal sentences, sub-goals first.
    pub fn goal_texts(&self) -> Vec<&str> {
        self.sub_goals
            .iter()
            .map(|g| g.plan.goal_text.as_str())
            .chain(std::iter::once(self.final_goal.plan.goal_text.as_str()))
            .collect()
    }

    pub fn step_cost(&self) -> u64 {
        self.tokens_per_image + self.text_tokens_per_step
    }

    /// World state at the start of the trajectory.
    pub fn initial_state(&self) -> Result<WorldState, WorldError> {
        init_scene(self.seed, &self.scene)
    }

    /// World state after the last recorded step.
    pub fn end_state(&self) -> Result<WorldState, ReplayError> {
        let mut s = self.initial_state().map_err(ReplayError::Scene)?;
        for rec in &self.steps[1..] {
            let a = rec.action.as_ref().ok_or(ReplayError::MissingAction(rec.step))?;
            if s.step(a).failure {
                return Err(ReplayError::Failure(rec.step));
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error(transparent)]
    Scene(WorldError),
    #[error("step {0} has no action")]
    MissingAction(usize),
    #[error("action at step {0} failed on replay")]
    Failure(usize),
    #[error("metadata differs at step {0}")]
    Mismatch(usize),
}

pub fn first_seen(steps: &[StepRecord]) -> BTreeMap<ObjectId, usize> {
    let mut seen = BTreeMap::new();
    for rec in steps {
        for id in &rec.metadata.object_log.visible {
            seen.entry(id.clone()).or_insert(rec.step);
        }
    }
    seen
}

/// Re-simulates every recorded action and checks each metadata entry
/// byte for byte.
pub fn replay(traj: &Trajectory) -> Result<(), ReplayError> {
    let mut s = traj.initial_state().map_err(ReplayError::Scene)?;
    let encode = |m: &MetadataEntry| serde_json::to_string(m).expect("metadata serializes");
    for (i, rec) in traj.steps.iter().enumerate() {
        if i > 0 {
            let a = rec.action.as_ref().ok_or(ReplayError::MissingAction(rec.step))?;
            if s.step(a).failure {
                return Err(ReplayError::Failure(rec.step));
            }
        }
        if encode(&s.metadata()) != encode(&rec.metadata) {
            return Err(ReplayError::Mismatch(rec.step));
        }
    }
    Ok(())
}

fn record(state: &WorldState, action: Option<Action>, sub_goal: Option<usize>) -> StepRecord {
    StepRecord {
        step: state.step,
        action,
        sub_goal,
        metadata: state.metadata(),
    }
}

/// Executes high-level actions, expanding `GotoObject` into primitive steps.
/// Returns the new records, or `None` if any step fails.
pub fn rollout(state: &mut WorldState, actions: &[Action], sub_goal: Option<usize>) -> Option<Vec<StepRecord>> {
    let mut out = Vec::new();
    for a in actions {
        let primitives = match a {
            Action::GotoObject(_) => {
                let mut probe = state.clone();
                let r = probe.step(a);
                if r.failure {
                    return None;
                }
                r.expanded
            }
            _ => vec![a.clone()],
        };
        for p in primitives {
            if state.step(&p).failure {
                return None;
            }
            out.push(record(state, Some(p), sub_goal));
        }
    }
    Some(out)
}

fn validate(cfg: &GenConfig) -> Result<(), GenError> {
    if cfg.templates.is_empty() {
        return Err(GenError::EmptyPool);
    }
    let frac_ok = |f: f64| f > 0.0 && f <= 0.5;
    if !frac_ok(cfg.early_frac) || !frac_ok(cfg.late_frac) {
        return Err(GenError::Config("window fractions must lie in (0, 0.5]".into()));
    }
    if cfg.max_sub_goals == 0 {
        return Err(GenError::Config("max_sub_goals must be at least 1".into()));
    }
    if cfg.tokens_per_image == 0 || cfg.text_tokens_per_step == 0 {
        return Err(GenError::Config("token constants must be positive".into()));
    }
    Ok(())
}

/// Number of agent poses from which `target`'s cell is in view.
fn exposure(state: &WorldState, target: &ObjectId) -> usize {
    let mut probe = state.clone();
    let mut count = 0;
    for x in 0..state.width {
        for y in 0..state.depth {
            let c = crate::world::Cell::new(x, y);
            if !state.is_walkable(c) {
                continue;
            }
            for h in crate::world::Heading::ALL {
                probe.agent.cell = c;
                probe.agent.heading = h;
                if probe.is_visible(target) {
                    count += 1;
                }
            }
        }
    }
    count
}

fn pick_reserved<R: Rng>(state: &WorldState, rng: &mut R) -> Option<ObjectId> {
    let visible = state.visible_ids();
    let mut cands: Vec<(usize, ObjectId)> = state
        .objects
        .values()
        .filter(|o| o.anchor.is_some() && !visible.contains(&o.id))
        .map(|o| (exposure(state, &o.id), o.id.clone()))
        .collect();
    cands.sort();
    cands.truncate(3);
    cands.choose(rng).map(|(_, id)| id.clone())
}

/// Binds the destination slot to `target` where the template allows it.
fn aim_at(goal: &mut Goal, state: &WorldState, target: &ObjectId) -> bool {
    if goal.template == TemplateKind::LookAtObjInLight {
        return false;
    }
    let Some(ti) = state.type_info(target) else {
        return false;
    };
    let carried: Vec<&ObjectId> = match &goal.vessel {
        Some(v) => vec![v],
        None => std::iter::once(&goal.object).chain(goal.second.as_ref()).collect(),
    };
    let role_clash = goal.template.appliance().is_some() && ti.role == goal.template.appliance();
    if !role_clash
        && carried
            .iter()
            .all(|c| state.type_info(c).is_some_and(|ci| ti.accepts(ci)))
    {
        goal.target = target.clone();
        true
    } else {
        false
    }
}

/// Runs the trajectory construction loop for one episode.
pub fn generate_trajectory(
    cfg: &GenConfig,
    scene: &SceneConfig,
    id: &str,
) -> Result<Trajectory, GenError> {
    validate(cfg)?;
    let mut state = init_scene(cfg.seed, scene)?;
    let mut rng = stream_rng(cfg.seed, 1);
    let mut steps = vec![record(&state, None, None)];
    let reserved = pick_reserved(&state, &mut rng).ok_or_else(|| GenError::GiveUp {
        stage: "choosing a hidden receptacle".into(),
        attempts: 0,
    })?;

    let mut sub_goals: Vec<SubGoal> = Vec::new();
    while sub_goals.len() < cfg.max_sub_goals {
        let index = sub_goals.len();
        let last = index + 1 == cfg.max_sub_goals;
        let mut attempts = 0;
        let (plan, records, end_state) = loop {
            attempts += 1;
            if attempts > cfg.retry_budget {
                return Err(GenError::GiveUp {
                    stage: format!("sampling sub-goal {index}"),
                    attempts: cfg.retry_budget,
                });
            }
            let kind = *cfg.templates.choose(&mut rng).unwrap();
            let Some(mut goal) = planner::sample_goal(&state, kind, &mut rng) else {
                continue;
            };
            if last && rng.gen_bool(0.75) {
                aim_at(&mut goal, &state, &reserved);
            }
            let Ok(plan) = planner::plan(&state, &goal) else {
                continue;
            };
            if plan.actions.is_empty() {
                continue;
            }
            let mut sim = state.clone();
            let Some(records) = rollout(&mut sim, &plan.actions, Some(index)) else {
                continue;
            };
            if records.is_empty() {
                continue;
            }
            let reveal = records
                .iter()
                .find(|r| r.metadata.object_log.visible.contains(&reserved))
                .map(|r| r.step);
            let accept = match (last, reveal) {
                (false, None) => true,
                (false, Some(_)) => false,
                (true, None) => false,
                (true, Some(at)) => {
                    let total = records.last().unwrap().step;
                    at as f64 >= (1.0 - cfg.late_frac) * total as f64
                }
            };
            if accept {
                break (plan, records, sim);
            }
        };
        sub_goals.push(SubGoal {
            plan,
            start_step: records.first().unwrap().step,
            end_step: records.last().unwrap().step,
        });
        steps.extend(records);
        state = end_state;
    }

    let final_goal = sample_final(cfg, &state, &steps, &mut rng)?;
    let mut traj = Trajectory {
        id: id.to_string(),
        seed: cfg.seed,
        scene: scene.clone(),
        sub_goals,
        final_goal,
        steps,
        token_length: 0,
        tokens_per_image: cfg.tokens_per_image,
        text_tokens_per_step: cfg.text_tokens_per_step,
        early_frac: cfg.early_frac,
        late_frac: cfg.late_frac,
    };
    traj.token_length = token_length(&traj, cfg.tokens_per_image, cfg.text_tokens_per_step);
    Ok(traj)
}

fn sample_final<R: Rng>(
    cfg: &GenConfig,
    state: &WorldState,
    steps: &[StepRecord],
    rng: &mut R,
) -> Result<FinalGoal, GenError> {
    let total = steps.len() - 1;
    let seen = first_seen(steps);
    let early: Vec<&ObjectId> = seen
        .iter()
        .filter(|(id, &t)| {
            t as f64 <= cfg.early_frac * total as f64
                && state.get(id).is_some_and(|o| o.pickupable && !o.receptacle)
                && !state.in_inventory_subtree(id)
        })
        .map(|(id, _)| id)
        .collect();
    let late: Vec<&ObjectId> = seen
        .iter()
        .filter(|(id, &t)| {
            t as f64 >= (1.0 - cfg.late_frac) * total as f64
                && state.get(id).is_some_and(|o| o.anchor.is_some())
        })
        .map(|(id, _)| id)
        .collect();
    let give_up = |attempts| GenError::GiveUp {
        stage: "sampling the final goal".into(),
        attempts,
    };
    if early.is_empty() || late.is_empty() {
        return Err(give_up(0));
    }
    let pool: Vec<TemplateKind> = TemplateKind::FINAL
        .into_iter()
        .filter(|k| cfg.templates.contains(k))
        .collect();
    let pool = if pool.is_empty() { TemplateKind::FINAL.to_vec() } else { pool };
    for _ in 0..cfg.retry_budget {
        let template = *pool.choose(rng).unwrap();
        let object = (*early.choose(rng).unwrap()).clone();
        let target = (*late.choose(rng).unwrap()).clone();
        let goal = Goal {
            template,
            object: object.clone(),
            second: None,
            vessel: None,
            target: target.clone(),
            sliced: false,
        };
        let accepts = match (state.type_info(&target), state.type_info(&object)) {
            (Some(t), Some(o)) => t.accepts(o),
            _ => false,
        };
        if !accepts {
            continue;
        }
        match planner::plan(state, &goal) {
            Ok(plan) if !plan.actions.is_empty() => {
                return Ok(FinalGoal {
                    plan,
                    pick_first_seen: seen[&object],
                    target_first_seen: seen[&target],
                })
            }
            _ => continue,
        }
    }
    Err(give_up(cfg.retry_budget))
}

/// Seed of episode `index`, attempt `attempt`, derived from a global seed.
pub fn episode_seed(global: u64, index: u64, attempt: u64) -> u64 {
    let mut r = stream_rng(global, 1000 + index);
    for _ in 0..attempt {
        r.next_u64();
    }
    r.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_traj: usize,
    pub seed: u64,
    pub scenes: Vec<SceneConfig>,
    pub gen: GenConfig,
    /// Fresh seeds tried per episode before the whole run fails.
    pub max_reseeds: u64,
}

/// Generates `n_traj` episodes in parallel. Episode `k` uses scene
/// `k mod |scenes|`; a give-up re-seeds the episode.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<Trajectory>, GenError> {
    use rayon::prelude::*;
    if cfg.scenes.is_empty() {
        return Err(GenError::Config("no scenes".into()));
    }
    (0..cfg.n_traj)
        .into_par_iter()
        .map(|k| {
            let scene = &cfg.scenes[k % cfg.scenes.len()];
            let mut last_err = None;
            for attempt in 0..cfg.max_reseeds.max(1) {
                let gen = GenConfig {
                    seed: episode_seed(cfg.seed, k as u64, attempt),
                    ..cfg.gen.clone()
                };
                match generate_trajectory(&gen, scene, &format!("traj_{k:05}")) {
                    Ok(t) => return Ok(t),
                    Err(e @ GenError::GiveUp { .. }) => last_err = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last_err.unwrap())
        })
        .collect()
}
