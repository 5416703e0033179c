//! Trajectory files and dataset manifests.
//!
//! A trajectory file is line-delimited JSON: one `header` record followed by
//! one `step` record per recorded step.

use super::{FinalGoal, StepRecord, SubGoal, Trajectory};
use crate::provenance::{read_to_string, write_atomic, IoError, Provenance};
use crate::scene::SceneConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TRAJ_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: written by {tool} {version}, format {format}")]
    Incompatible {
        path: PathBuf,
        tool: String,
        version: String,
        format: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format: u32,
    pub provenance: Provenance,
    pub id: String,
    pub seed: u64,
    pub scene: SceneConfig,
    pub sub_goals: Vec<SubGoal>,
    pub final_goal: FinalGoal,
    pub total_steps: usize,
    pub token_length: u64,
    pub tokens_per_image: u64,
    pub text_tokens_per_step: u64,
    pub early_frac: f64,
    pub late_frac: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Box<TrajectoryHeader>),
    Step(StepRecord),
}

/// Serializes a trajectory to its line-delimited form.
pub fn write_trajectory(traj: &Trajectory, provenance: &Provenance) -> String {
    let header = TrajectoryHeader {
        format: TRAJ_FORMAT,
        provenance: provenance.clone(),
        id: traj.id.clone(),
        seed: traj.seed,
        scene: traj.scene.clone(),
        sub_goals: traj.sub_goals.clone(),
        final_goal: traj.final_goal.clone(),
        total_steps: traj.total_steps(),
        token_length: traj.token_length,
        tokens_per_image: traj.tokens_per_image,
        text_tokens_per_step: traj.text_tokens_per_step,
        early_frac: traj.early_frac,
        late_frac: traj.late_frac,
    };
    let mut out = serde_json::to_string(&Line::Header(Box::new(header))).expect("header serializes");
    out.push('\n');
    for s in &traj.steps {
        out.push_str(&serde_json::to_string(&Line::Step(s.clone())).expect("step serializes"));
        out.push('\n');
    }
    out
}

/// Parses a trajectory file body. `path` is used for error messages only.
pub fn read_trajectory(text: &str, path: &Path) -> Result<(TrajectoryHeader, Trajectory), LoadError> {
    let parse_err = |line: usize, message: String| LoadError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: Option<TrajectoryHeader> = None;
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).map_err(|e| parse_err(i + 1, e.to_string()))?;
        match line {
            Line::Header(h) if header.is_none() && i == 0 => {
                if !h.provenance.is_compatible() || h.format != TRAJ_FORMAT {
                    return Err(LoadError::Incompatible {
                        path: path.to_path_buf(),
                        tool: h.provenance.tool.clone(),
                        version: h.provenance.version.clone(),
                        format: h.format,
                    });
                }
                header = Some(*h);
            }
            Line::Header(_) => return Err(parse_err(i + 1, "unexpected header record".into())),
            Line::Step(s) => steps.push(s),
        }
    }
    let h = header.ok_or_else(|| parse_err(1, "missing header record".into()))?;
    if steps.len() != h.total_steps + 1 {
        return Err(parse_err(
            steps.len() + 1,
            format!("expected {} step records, found {}", h.total_steps + 1, steps.len()),
        ));
    }
    let traj = Trajectory {
        id: h.id.clone(),
        seed: h.seed,
        scene: h.scene.clone(),
        sub_goals: h.sub_goals.clone(),
        final_goal: h.final_goal.clone(),
        steps,
        token_length: h.token_length,
        tokens_per_image: h.tokens_per_image,
        text_tokens_per_step: h.text_tokens_per_step,
        early_frac: h.early_frac,
        late_frac: h.late_frac,
    };
    Ok((h, traj))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, LoadError> {
    Ok(read_trajectory(&read_to_string(path)?, path)?.1)
}

/// Dataset statistics, keyed like the usual dataset-statistics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    #[serde(rename = "# trajectory")]
    pub trajectories: usize,
    #[serde(rename = "# avg subgoals")]
    pub avg_subgoals: f64,
    #[serde(rename = "# max subgoals")]
    pub max_subgoals: usize,
    #[serde(rename = "# avg steps")]
    pub avg_steps: f64,
    #[serde(rename = "# max steps")]
    pub max_steps: usize,
    #[serde(rename = "# avg token length")]
    pub avg_token_length: f64,
    #[serde(rename = "# max token length")]
    pub max_token_length: u64,
    #[serde(rename = "# avg interaction with objects per episode")]
    pub avg_interactions: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: u32,
    pub provenance: Provenance,
    pub files: Vec<String>,
    pub stats: DatasetStats,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Statistics over a set of trajectories. Sub-goal counts include the final goal.
pub fn manifest_for(trajs: &[Trajectory], provenance: &Provenance) -> DatasetManifest {
    let subgoals = |t: &Trajectory| t.sub_goals.len() + 1;
    let interactions = |t: &Trajectory| {
        t.steps
            .iter()
            .filter(|s| s.action.as_ref().is_some_and(|a| a.is_interaction()))
            .count()
    };
    DatasetManifest {
        format: TRAJ_FORMAT,
        provenance: provenance.clone(),
        files: trajs.iter().map(|t| format!("trajectories/{}.jsonl", t.id)).collect(),
        stats: DatasetStats {
            trajectories: trajs.len(),
            avg_subgoals: mean(trajs.iter().map(|t| subgoals(t) as f64)),
            max_subgoals: trajs.iter().map(subgoals).max().unwrap_or(0),
            avg_steps: mean(trajs.iter().map(|t| t.total_steps() as f64)),
            max_steps: trajs.iter().map(Trajectory::total_steps).max().unwrap_or(0),
            avg_token_length: mean(trajs.iter().map(|t| t.token_length as f64)),
            max_token_length: trajs.iter().map(|t| t.token_length).max().unwrap_or(0),
            avg_interactions: mean(trajs.iter().map(|t| interactions(t) as f64)),
        },
    }
}

/// Writes one file per trajectory plus `manifest.json` under `out_dir`.
pub fn export_dataset(
    trajs: &[Trajectory],
    out_dir: &Path,
    provenance: &Provenance,
) -> Result<DatasetManifest, IoError> {
    let manifest = manifest_for(trajs, provenance);
    for (t, file) in trajs.iter().zip(&manifest.files) {
        write_atomic(&out_dir.join(file), write_trajectory(t, provenance).as_bytes())?;
    }
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    write_atomic(&out_dir.join("manifest.json"), body.as_bytes())?;
    Ok(manifest)
}

/// Loads every trajectory listed in `dir/manifest.json`.
pub fn load_dir(dir: &Path) -> Result<(DatasetManifest, Vec<Trajectory>), LoadError> {
    let path = dir.join("manifest.json");
    let manifest: DatasetManifest =
        serde_json::from_str(&read_to_string(&path)?).map_err(|e| LoadError::Parse {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
    let trajs = manifest
        .files
        .iter()
        .map(|f| load_trajectory(&dir.join(f)))
        .collect::<Result<_, _>>()?;
    Ok((manifest, trajs))
}
