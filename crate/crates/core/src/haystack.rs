//! Token-budgeted evaluation contexts cut from a trajectory around the
//! evidence ("needle") steps of a question.
//!
//! Every step costs the same number of tokens (one image plus a fixed text
//! overhead). A needle's depth is the share of the surrounding steps that sit
//! before it: `before / (before + after) * 100`, so depth 0 puts the needle
//! first and depth 100 puts it last. With several needles the context's depth
//! is the depth of the first one.

use crate::qa::{EvidenceClass, QaInstance};
use crate::traj::Trajectory;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HaystackSpec {
    pub target_tokens: u64,
    /// Percent in [0, 100].
    pub target_depth: f64,
    pub tokens_per_image: u64,
    pub text_tokens_per_step: u64,
}

impl HaystackSpec {
    pub fn step_cost(&self) -> u64 {
        self.tokens_per_image + self.text_tokens_per_step
    }

    /// Whole steps that fit in the budget.
    pub fn step_budget(&self) -> usize {
        (self.target_tokens / self.step_cost().max(1)) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HaystackContext {
    pub trajectory_id: String,
    pub qa_id: String,
    pub spec: HaystackSpec,
    /// Ascending step indices.
    pub included_steps: Vec<usize>,
    pub realized_tokens: u64,
    /// One entry per needle, in needle order.
    pub realized_depths: Vec<f64>,
    /// The target depth could not be met within [`DEPTH_TOLERANCE`], because
    /// the needle sits too close to a trajectory boundary or the window is
    /// too short to resolve it.
    pub clamped: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum HaystackError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("question {0} does not fit this builder: {1}")]
    Evidence(String, String),
}

fn check(traj: &Trajectory, qa: &QaInstance, spec: &HaystackSpec) -> Result<(), HaystackError> {
    if spec.step_cost() == 0 {
        return Err(HaystackError::Spec("step cost must be positive".into()));
    }
    if !(0.0..=100.0).contains(&spec.target_depth) {
        return Err(HaystackError::Spec(format!("depth {} outside [0, 100]", spec.target_depth)));
    }
    if qa.gt_steps.is_empty() || qa.gt_steps.iter().any(|&g| g >= traj.steps.len()) {
        return Err(HaystackError::Evidence(qa.id.clone(), "evidence steps out of range".into()));
    }
    if spec.step_budget() < qa.gt_steps.len() {
        return Err(HaystackError::Spec(format!(
            "{} tokens cannot hold {} evidence steps of {} tokens",
            spec.target_tokens,
            qa.gt_steps.len(),
            spec.step_cost()
        )));
    }
    Ok(())
}

fn depth_of(before: usize, total: usize, needles: usize) -> f64 {
    let others = total - needles;
    if others == 0 {
        0.0
    } else {
        before as f64 / others as f64 * 100.0
    }
}

fn finish(
    traj: &Trajectory,
    qa: &QaInstance,
    spec: &HaystackSpec,
    included: Vec<usize>,
    clamped: bool,
) -> HaystackContext {
    let n = included.len();
    let k = qa.gt_steps.len();
    let realized_depths = qa
        .gt_steps
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let before = included.partition_point(|s| s < g) - j;
            depth_of(before, n, k)
        })
        .collect();
    HaystackContext {
        trajectory_id: traj.id.clone(),
        qa_id: qa.id.clone(),
        spec: *spec,
        realized_tokens: n as u64 * spec.step_cost(),
        included_steps: included,
        realized_depths,
        clamped,
    }
}

/// Contiguous window around a single evidence step, as close to the target
/// depth as the trajectory boundaries allow.
pub fn build_single(
    traj: &Trajectory,
    qa: &QaInstance,
    spec: &HaystackSpec,
) -> Result<HaystackContext, HaystackError> {
    if qa.evidence_class != EvidenceClass::Single {
        return Err(HaystackError::Evidence(qa.id.clone(), "expects single evidence".into()));
    }
    check(traj, qa, spec)?;
    let total = traj.steps.len();
    let g = qa.gt_steps[0];
    let n = spec.step_budget().min(total);
    // `before` ranges over windows of n steps that contain g
    let lo = (g + n).saturating_sub(total);
    let hi = g.min(n - 1);
    let want = (spec.target_depth / 100.0 * (n - 1) as f64).round() as usize;
    let before = want.clamp(lo, hi);
    let start = g - before;
    let ctx = finish(traj, qa, spec, (start..start + n).collect(), false);
    let clamped = (ctx.realized_depths[0] - spec.target_depth).abs() > DEPTH_TOLERANCE;
    Ok(HaystackContext { clamped, ..ctx })
}

/// Splits `budget` across `sizes` in proportion, largest remainder first,
/// ties to the lower index. Never exceeds a size.
pub fn proportional(budget: usize, sizes: &[usize]) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        return vec![0; sizes.len()];
    }
    let budget = budget.min(sum);
    let mut out: Vec<usize> = sizes.iter().map(|&s| budget * s / sum).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // remainder numerators budget * s mod sum, compared exactly
    order.sort_by_key(|&i| (std::cmp::Reverse(budget * sizes[i] % sum), i));
    let mut left = budget - out.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        if out[i] < sizes[i] {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

/// `count` indices spread evenly over the open interval `(a, b)`.
fn spread(a: usize, b: usize, count: usize) -> impl Iterator<Item = usize> {
    let gap = b - a - 1;
    (0..count).map(move |j| a + 1 + (2 * j + 1) * gap / (2 * count))
}

/// All evidence steps in order. The first needle is placed at the target
/// depth by the number of steps taken before it; the remaining budget goes to
/// the steps between consecutive needles (in proportion to gap length) and
/// then to the steps after the last needle.
pub fn build_multi(
    traj: &Trajectory,
    qa: &QaInstance,
    spec: &HaystackSpec,
) -> Result<HaystackContext, HaystackError> {
    if qa.evidence_class != EvidenceClass::Multi {
        return Err(HaystackError::Evidence(qa.id.clone(), "expects multiple evidence".into()));
    }
    check(traj, qa, spec)?;
    let total = traj.steps.len();
    let gt = &qa.gt_steps;
    let n = spec.step_budget().min(total);
    let filler = n - gt.len();
    let gaps: Vec<usize> = gt.windows(2).map(|w| w[1] - w[0] - 1).collect();
    let (first, last) = (gt[0], *gt.last().unwrap());
    let room_after = total - 1 - last;
    let want = (spec.target_depth / 100.0 * filler as f64).round() as usize;
    // never more than fits before, never so few that the rest overflows
    let before = want
        .min(first)
        .max(filler.saturating_sub(gaps.iter().sum::<usize>() + room_after));
    let alloc = proportional(filler - before, &gaps);
    let after = filler - before - alloc.iter().sum::<usize>();

    let mut included: Vec<usize> = gt.clone();
    for (w, &a) in gt.windows(2).zip(&alloc) {
        included.extend(spread(w[0], w[1], a));
    }
    included.extend(first - before..first);
    included.extend(last + 1..last + 1 + after);
    included.sort_unstable();
    let ctx = finish(traj, qa, spec, included, false);
    let clamped = (ctx.realized_depths[0] - spec.target_depth).abs() > DEPTH_TOLERANCE;
    Ok(HaystackContext { clamped, ..ctx })
}

pub fn build(
    traj: &Trajectory,
    qa: &QaInstance,
    spec: &HaystackSpec,
) -> Result<HaystackContext, HaystackError> {
    match qa.evidence_class {
        EvidenceClass::Single => build_single(traj, qa, spec),
        EvidenceClass::Multi => build_multi(traj, qa, spec),
    }
}

/// Largest accepted gap between target and realized depth, in points.
pub const DEPTH_TOLERANCE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Built(HaystackContext),
    NotApplicable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridCell {
    pub length: u64,
    pub depth: f64,
    pub qa_id: String,
    pub outcome: CellOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridConfig {
    pub tokens_per_image: u64,
    pub text_tokens_per_step: u64,
    /// Lengths above this are not applicable (the model's context limit).
    pub max_context: Option<u64>,
}

/// Every (length, depth) cell for every question. A cell is not applicable
/// when the length exceeds the trajectory or the model limit, is too short
/// for the evidence, or cannot place the needle at the requested depth.
pub fn build_grid(
    traj: &Trajectory,
    qas: &[QaInstance],
    lengths: &[u64],
    depths: &[f64],
    cfg: &GridConfig,
) -> Vec<GridCell> {
    let mut out = Vec::with_capacity(qas.len() * lengths.len() * depths.len());
    for qa in qas.iter().filter(|q| q.trajectory_id == traj.id) {
        for &length in lengths {
            for &depth in depths {
                let spec = HaystackSpec {
                    target_tokens: length,
                    target_depth: depth,
                    tokens_per_image: cfg.tokens_per_image,
                    text_tokens_per_step: cfg.text_tokens_per_step,
                };
                let na = |reason: String| CellOutcome::NotApplicable { reason };
                let outcome = if spec.step_budget() > traj.steps.len() {
                    na(format!("trajectory has only {} steps", traj.steps.len()))
                } else if cfg.max_context.is_some_and(|m| length > m) {
                    na(format!("longer than the {} token limit", cfg.max_context.unwrap()))
                } else {
                    match build(traj, qa, &spec) {
                        Ok(ctx) if ctx.clamped => {
                            na(format!("depth {depth} unreachable (got {:.1})", ctx.realized_depths[0]))
                        }
                        Ok(ctx) => CellOutcome::Built(ctx),
                        Err(e) => na(e.to_string()),
                    }
                };
                out.push(GridCell {
                    length,
                    depth,
                    qa_id: qa.id.clone(),
                    outcome,
                });
            }
        }
    }
    out
}

/// Per-cell score table; `None` scores print as `N/A`.
pub fn heatmap_csv(rows: &[(u64, f64, Option<f64>)]) -> String {
    let mut out = String::from("length,depth,score\n");
    for (l, d, s) in rows {
        match s {
            Some(s) => writeln!(out, "{l},{d},{s:.4}").unwrap(),
            None => writeln!(out, "{l},{d},N/A").unwrap(),
        }
    }
    out
}

/// Share of questions per (length, depth) cell that produced a context.
pub fn coverage(cells: &[GridCell], lengths: &[u64], depths: &[f64]) -> Vec<(u64, f64, Option<f64>)> {
    let mut rows = Vec::new();
    for &l in lengths {
        for &d in depths {
            let here: Vec<&GridCell> = cells.iter().filter(|c| c.length == l && c.depth == d).collect();
            let built = here
                .iter()
                .filter(|c| matches!(c.outcome, CellOutcome::Built(_)))
                .count();
            let score = (built > 0).then(|| built as f64 / here.len() as f64);
            rows.push((l, d, score));
        }
    }
    rows
}

/// Geometric lengths `start, 2*start, ...` up to and including `end`.
pub fn geometric_lengths(start: u64, end: u64) -> Vec<u64> {
    std::iter::successors(Some(start.max(1)), |l| l.checked_mul(2))
        .take_while(|&l| l <= end)
        .collect()
}

#[cfg(test)]
mod tests;
