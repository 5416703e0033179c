//! Online evaluation of agents against recorded trajectories.
//!
//! Plan-level evaluation walks the plans of a trajectory in order. Each plan
//! starts from the ground-truth state and history that precede it, so the
//! agent's own deviations never leak into the next plan. A failed plan ends
//! the episode. Every completed plan is worth a reward of 1.

mod agent;
mod context;

pub use agent::{Agent, AgentError, OracleAgent, PlanStart, RandomAgent, ScriptedAgent, WireAgent};
pub use context::{
    build_interleaved, build_text_memory, count_tokens, cosine, retrieve_image_memory, AgentContext,
    BagOfTypes, ContextMode, Embedder, Entry, Retrieval, TokenCosts,
};

use crate::planner::{check_goal, Goal};
use crate::qa::NameTable;
use crate::traj::{rollout, ReplayError, StepRecord, Trajectory};
use crate::world::{Action, FailureReason, WorldState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation setup: {0}")]
    Spec(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalConfig {
    pub mode: ContextMode,
    pub top_k: usize,
    pub token_budget: u64,
    /// Most recent steps kept when an interleaved context is trimmed.
    pub keep_recent: usize,
    pub costs: TokenCosts,
    /// A plan running longer than this many times its ground-truth length
    /// is a deadlock.
    pub deadlock_factor: usize,
    pub timeout_secs: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: ContextMode::Interleaved,
            top_k: 10,
            token_budget: 128 * 1024,
            keep_recent: 8,
            costs: TokenCosts {
                per_image: 121,
                per_action: 8,
            },
            deadlock_factor: 10,
            timeout_secs: 30,
        }
    }
}

impl EvalConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanFailure {
    Collision,
    InvalidAction,
    Deadlock,
    ProtocolError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanOutcome {
    pub index: usize,
    pub goal: String,
    pub success: bool,
    /// Agent actions taken.
    pub steps: usize,
    pub failure_reason: Option<PlanFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedSuccess {
    pub goto: bool,
    pub pickup: bool,
    pub put: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeReport {
    pub trajectory_id: String,
    pub mode: ContextMode,
    pub total_reward: f64,
    pub plan_outcomes: Vec<PlanOutcome>,
    pub staged_success: Option<StagedSuccess>,
    /// Context size in tokens before every agent action.
    pub context_size_trace: Vec<u64>,
}

/// One plan of a trajectory together with the ground truth around it.
struct PlanCase<'a> {
    goal: &'a Goal,
    goal_text: &'a str,
    /// Records before the plan starts.
    history: &'a [StepRecord],
    start: WorldState,
    gt_len: usize,
}

fn plan_cases(traj: &Trajectory) -> Result<Vec<PlanCase<'_>>, EvalError> {
    let mut state = traj.initial_state().map_err(ReplayError::Scene)?;
    let mut cases = Vec::new();
    let mut cursor = 1;
    for g in &traj.sub_goals {
        for rec in &traj.steps[cursor..g.start_step] {
            advance(&mut state, rec)?;
        }
        cursor = g.start_step;
        cases.push(PlanCase {
            goal: &g.plan.goal,
            goal_text: &g.plan.goal_text,
            history: &traj.steps[..g.start_step],
            start: state.clone(),
            gt_len: g.end_step + 1 - g.start_step,
        });
    }
    for rec in &traj.steps[cursor..] {
        advance(&mut state, rec)?;
    }
    let f = &traj.final_goal.plan;
    let gt_len = rollout(&mut state.clone(), &f.actions, None)
        .map(|r| r.len())
        .ok_or(ReplayError::Failure(traj.total_steps()))?;
    cases.push(PlanCase {
        goal: &f.goal,
        goal_text: &f.goal_text,
        history: &traj.steps,
        start: state,
        gt_len,
    });
    Ok(cases)
}

fn advance(state: &mut WorldState, rec: &StepRecord) -> Result<(), ReplayError> {
    let a = rec.action.as_ref().ok_or(ReplayError::MissingAction(rec.step))?;
    if state.step(a).failure {
        return Err(ReplayError::Failure(rec.step));
    }
    Ok(())
}

/// Builds the context for `mode` and its wire form, which carries the
/// metadata of every referenced observation.
pub fn assemble(
    cfg: &EvalConfig,
    history: &[StepRecord],
    goal: &Goal,
    goal_text: &str,
    names: &NameTable,
) -> Result<(AgentContext, Value), EvalError> {
    let costs = &cfg.costs;
    let current = history.last().ok_or_else(|| EvalError::Spec("empty history".into()))?;
    let ctx = match cfg.mode {
        ContextMode::Interleaved => {
            build_interleaved(history, goal_text, cfg.token_budget, cfg.keep_recent, costs)?
        }
        ContextMode::MemText => {
            let entries = vec![
                Entry::Goal(goal_text.to_string()),
                Entry::Memory(build_text_memory(history, names)),
                Entry::State(current.step),
            ];
            AgentContext {
                mode: cfg.mode,
                goal: goal_text.to_string(),
                tokens: count_tokens(&entries, costs),
                entries,
                token_budget: cfg.token_budget,
                truncated: false,
            }
        }
        ContextMode::MemImage => {
            let r = retrieve_image_memory(&history[..history.len() - 1], goal, cfg.top_k, &BagOfTypes::default())
                .or_else(|e| if history.len() == 1 { Ok(Retrieval { ranked: vec![], short: true }) } else { Err(e) })?;
            let mut steps = r.ranked;
            steps.sort_unstable();
            let mut entries = vec![Entry::Goal(goal_text.to_string())];
            entries.extend(steps.into_iter().map(Entry::State));
            entries.push(Entry::State(current.step));
            AgentContext {
                mode: cfg.mode,
                goal: goal_text.to_string(),
                tokens: count_tokens(&entries, costs),
                entries,
                token_budget: cfg.token_budget,
                truncated: r.short,
            }
        }
    };
    let observations: serde_json::Map<String, Value> = ctx
        .entries
        .iter()
        .filter_map(|e| match e {
            Entry::State(s) => history.get(*s).map(|r| (s.to_string(), json!(r.metadata))),
            _ => None,
        })
        .collect();
    let wire = json!({ "context": ctx, "observations": observations });
    Ok((ctx, wire))
}

struct Run {
    outcome: PlanOutcome,
    staged: StagedSuccess,
}

fn run_plan(
    index: usize,
    case: &PlanCase,
    agent: &mut dyn Agent,
    cfg: &EvalConfig,
    names: &NameTable,
    trace: &mut Vec<u64>,
) -> Result<Run, EvalError> {
    let (ctx, wire) = assemble(cfg, case.history, case.goal, case.goal_text, names)?;
    let mut outcome = PlanOutcome {
        index,
        goal: case.goal_text.to_string(),
        success: false,
        steps: 0,
        failure_reason: None,
        detail: None,
    };
    let mut staged = StagedSuccess::default();
    let start = PlanStart {
        plan_index: index,
        goal: case.goal_text,
        mode: cfg.mode.as_str(),
        config: json!({ "topK": cfg.top_k, "tokenBudget": cfg.token_budget }),
        context: wire,
    };
    if let Err(e) = agent.begin(&start) {
        outcome.failure_reason = Some(PlanFailure::ProtocolError);
        outcome.detail = Some(e.to_string());
        return Ok(Run { outcome, staged });
    }
    let mut env = case.start.clone();
    let per_step = cfg.costs.per_image + cfg.costs.per_action;
    let limit = cfg.deadlock_factor * case.gt_len.max(1);
    let note = |env: &WorldState, staged: &mut StagedSuccess| {
        staged.goto |= env.is_interactable(&case.goal.object);
        staged.pickup |= staged.goto && env.held().is_some_and(|h| *h == case.goal.object);
    };
    note(&env, &mut staged);
    while outcome.steps < limit {
        let tokens = ctx.tokens + outcome.steps as u64 * per_step;
        trace.push(tokens);
        let text = match agent.act(&env.observe(), tokens) {
            Ok(t) => t,
            Err(e) => {
                outcome.failure_reason = Some(PlanFailure::ProtocolError);
                outcome.detail = Some(e.to_string());
                return Ok(Run { outcome, staged });
            }
        };
        outcome.steps += 1;
        let action: Action = match text.parse() {
            Ok(a) => a,
            Err(e) => {
                outcome.failure_reason = Some(PlanFailure::InvalidAction);
                outcome.detail = Some(format!("{e}"));
                return Ok(Run { outcome, staged });
            }
        };
        let r = env.step(&action);
        if r.failure {
            outcome.failure_reason = Some(match r.failure_reason {
                FailureReason::Collision => PlanFailure::Collision,
                FailureReason::Deadlock => PlanFailure::Deadlock,
                _ => PlanFailure::InvalidAction,
            });
            outcome.detail = r.detail.or(Some(text));
            return Ok(Run { outcome, staged });
        }
        note(&env, &mut staged);
        if check_goal(&env, case.goal) {
            outcome.success = true;
            staged.put = staged.pickup;
            return Ok(Run { outcome, staged });
        }
    }
    outcome.failure_reason = Some(PlanFailure::Deadlock);
    outcome.detail = Some(format!("no success within {limit} actions"));
    Ok(Run { outcome, staged })
}

fn finish(agent: &mut dyn Agent, report: EpisodeReport) -> EpisodeReport {
    agent.finish(&serde_json::to_value(&report).expect("report serializes"));
    report
}

/// Runs every plan in order, stopping at the first failure.
pub fn run_plan_level(
    traj: &Trajectory,
    agent: &mut dyn Agent,
    cfg: &EvalConfig,
) -> Result<EpisodeReport, EvalError> {
    let names = NameTable::for_trajectory(traj);
    let mut report = EpisodeReport {
        trajectory_id: traj.id.clone(),
        mode: cfg.mode,
        total_reward: 0.0,
        plan_outcomes: Vec::new(),
        staged_success: None,
        context_size_trace: Vec::new(),
    };
    for (i, case) in plan_cases(traj)?.iter().enumerate() {
        let run = run_plan(i, case, agent, cfg, &names, &mut report.context_size_trace)?;
        let ok = run.outcome.success;
        if ok {
            report.total_reward += 1.0;
        }
        report.plan_outcomes.push(run.outcome);
        if !ok {
            break;
        }
    }
    Ok(finish(agent, report))
}

/// Runs only the final goal, with the whole trajectory as history, and
/// records how far the agent got through go-to, pick-up and put.
pub fn run_final_task(
    traj: &Trajectory,
    agent: &mut dyn Agent,
    cfg: &EvalConfig,
) -> Result<EpisodeReport, EvalError> {
    let names = NameTable::for_trajectory(traj);
    let cases = plan_cases(traj)?;
    let index = cases.len() - 1;
    let mut trace = Vec::new();
    let run = run_plan(index, &cases[index], agent, cfg, &names, &mut trace)?;
    let report = EpisodeReport {
        trajectory_id: traj.id.clone(),
        mode: cfg.mode,
        total_reward: if run.outcome.success { 1.0 } else { 0.0 },
        plan_outcomes: vec![run.outcome],
        staged_success: Some(run.staged),
        context_size_trace: trace,
    };
    Ok(finish(agent, report))
}

/// Per-stage success rates over final-task reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRates {
    pub episodes: usize,
    pub goto: f64,
    pub pickup: f64,
    pub put: f64,
}

impl StageRates {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a EpisodeReport>) -> Self {
        let staged: Vec<StagedSuccess> = reports.into_iter().filter_map(|r| r.staged_success).collect();
        let n = staged.len();
        let rate = |f: fn(&StagedSuccess) -> bool| {
            if n == 0 {
                0.0
            } else {
                staged.iter().filter(|s| f(s)).count() as f64 / n as f64
            }
        };
        Self {
            episodes: n,
            goto: rate(|s| s.goto),
            pickup: rate(|s| s.pickup),
            put: rate(|s| s.put),
        }
    }
}

#[cfg(test)]
mod tests;
