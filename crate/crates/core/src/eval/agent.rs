use crate::traj::{rollout, Trajectory};
use crate::world::{Action, Observation};
use crate::wire::{Channel, HarnessMsg, PeerMsg, WireError};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl From<WireError> for AgentError {
    fn from(e: WireError) -> Self {
        AgentError::Protocol(e.to_string())
    }
}

/// Start of one plan: what the agent is told before acting.
#[derive(Clone, Debug, Serialize)]
pub struct PlanStart<'a> {
    pub plan_index: usize,
    pub goal: &'a str,
    pub mode: &'a str,
    pub config: Value,
    pub context: Value,
}

/// An agent acts one step at a time. Actions are returned in their text
/// form so that malformed output can be scored instead of rejected early.
pub trait Agent: Send {
    fn begin(&mut self, start: &PlanStart) -> Result<(), AgentError>;
    fn act(&mut self, observation: &Observation, context_tokens: u64) -> Result<String, AgentError>;
    fn finish(&mut self, _report: &Value) {}
}

/// Replays ground-truth primitive actions for each plan.
pub struct OracleAgent {
    pub(super) plans: Vec<Vec<Action>>,
    queue: VecDeque<Action>,
}

impl OracleAgent {
    pub fn new(traj: &Trajectory) -> Self {
        let mut plans: Vec<Vec<Action>> = traj
            .sub_goals
            .iter()
            .enumerate()
            .map(|(i, _)| {
                traj.steps
                    .iter()
                    .filter(|s| s.sub_goal == Some(i))
                    .filter_map(|s| s.action.clone())
                    .collect()
            })
            .collect();
        let final_actions = traj
            .end_state()
            .ok()
            .and_then(|mut s| rollout(&mut s, &traj.final_goal.plan.actions, None))
            .map(|recs| recs.into_iter().filter_map(|r| r.action).collect())
            .unwrap_or_default();
        plans.push(final_actions);
        Self {
            plans,
            queue: VecDeque::new(),
        }
    }
}

impl Agent for OracleAgent {
    fn begin(&mut self, start: &PlanStart) -> Result<(), AgentError> {
        self.queue = self.plans.get(start.plan_index).cloned().unwrap_or_default().into();
        Ok(())
    }

    fn act(&mut self, _: &Observation, _: u64) -> Result<String, AgentError> {
        Ok(self
            .queue
            .pop_front()
            .map_or_else(|| "Done".to_string(), |a| a.to_string()))
    }
}

/// Picks uniformly among actions that name objects currently in view.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: crate::rng::stream_rng(seed, 4),
        }
    }

    pub fn candidates(obs: &Observation) -> Vec<Action> {
        let mut out = vec![Action::MoveAhead, Action::RotateLeft, Action::RotateRight];
        for id in &obs.visible {
            out.push(Action::GotoObject(id.clone()));
            out.push(Action::PickupObject(id.clone()));
            out.push(Action::OpenObject(id.clone()));
            out.push(Action::CloseObject(id.clone()));
            out.push(Action::SliceObject(id.clone()));
            for held in &obs.inventory {
                out.push(Action::PutObject(held.clone(), id.clone()));
            }
        }
        out
    }
}

impl Agent for RandomAgent {
    fn begin(&mut self, _: &PlanStart) -> Result<(), AgentError> {
        Ok(())
    }

    fn act(&mut self, obs: &Observation, _: u64) -> Result<String, AgentError> {
        let c = Self::candidates(obs);
        Ok(c.choose(&mut self.rng).expect("non-empty").to_string())
    }
}

/// Emits a fixed list of action strings, then repeats the last one.
pub struct ScriptedAgent {
    script: Vec<String>,
    pos: usize,
}

impl ScriptedAgent {
    pub fn new(script: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            script: script.into_iter().map(Into::into).collect(),
            pos: 0,
        }
    }
}

impl Agent for ScriptedAgent {
    fn begin(&mut self, _: &PlanStart) -> Result<(), AgentError> {
        Ok(())
    }

    fn act(&mut self, _: &Observation, _: u64) -> Result<String, AgentError> {
        let a = self
            .script
            .get(self.pos)
            .or(self.script.last())
            .cloned()
            .unwrap_or_default();
        self.pos += 1;
        Ok(a)
    }
}

/// An external agent over the wire protocol.
pub struct WireAgent {
    channel: Channel,
}

impl WireAgent {
    pub fn new(channel: Channel) -> Self {
        Self { channel }
    }
}

impl Agent for WireAgent {
    fn begin(&mut self, start: &PlanStart) -> Result<(), AgentError> {
        let mut config = start.config.clone();
        config["plan"] = start.plan_index.into();
        self.channel.send(&HarnessMsg::Init {
            goal: start.goal.to_string(),
            mode: start.mode.to_string(),
            config,
            context: start.context.clone(),
        })?;
        Ok(())
    }

    fn act(&mut self, observation: &Observation, context_tokens: u64) -> Result<String, AgentError> {
        let msg = HarnessMsg::Observe {
            step: observation.step,
            observation: serde_json::to_value(observation).expect("observation serializes"),
            context_tokens,
        };
        match self.channel.request(&msg)? {
            PeerMsg::Act { action } => Ok(action),
            other => Err(AgentError::Protocol(format!("expected act, got {other:?}"))),
        }
    }

    fn finish(&mut self, report: &Value) {
        let _ = self.channel.send(&HarnessMsg::Done {
            report: report.clone(),
        });
    }
}
