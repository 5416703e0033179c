//! Scene configuration documents.
//!
//! A scene is a versioned TOML document naming the room size, the agent's
//! start pose, fixed receptacle placements (optionally with explicit
//! contents) and a table of object counts that are scattered over compatible
//! receptacles at initialization time.
//!
//! ```toml
//! version = 1
//! name = "galley"
//! width = 8
//! depth = 6
//!
//! [agent]
//! cell = [1, 1]
//! heading = "E"
//!
//! [[receptacles]]
//! type = "CounterTop"
//! cell = [4, 0]
//! contents = ["Apple"]
//!
//! [objects]
//! Mug = 1
//! ```

use crate::world::Heading;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const SCENE_VERSION: u32 = 1;

const PRESETS: [(&str, &str); 3] = [
    ("apartment", include_str!("../assets/scenes/apartment.toml")),
    ("kitchen", include_str!("../assets/scenes/kitchen.toml")),
    ("loft", include_str!("../assets/scenes/loft.toml")),
];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene document is not valid TOML: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("unsupported scene version {0} (expected {SCENE_VERSION})")]
    Version(u32),
    #[error("unknown preset scene `{0}`")]
    UnknownPreset(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentStart {
    pub cell: [i32; 2],
    pub heading: Heading,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceptacleSpec {
    #[serde(rename = "type")]
    pub obj_type: String,
    pub cell: [i32; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contents: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub version: u32,
    pub name: String,
    pub width: i32,
    pub depth: i32,
    pub agent: AgentStart,
    #[serde(default)]
    pub low_level: bool,
    #[serde(default)]
    pub receptacles: Vec<ReceptacleSpec>,
    #[serde(default)]
    pub objects: BTreeMap<String, usize>,
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self, SceneError> {
        let cfg: SceneConfig = toml::from_str(text)?;
        if cfg.version != SCENE_VERSION {
            return Err(SceneError::Version(cfg.version));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    pub fn preset(name: &str) -> Result<Self, SceneError> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::parse(text))
            .unwrap_or_else(|| Err(SceneError::UnknownPreset(name.to_string())))
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    /// An empty room with the given receptacles and no scattered objects.
    pub fn empty(name: &str, width: i32, depth: i32, agent: [i32; 2], heading: Heading) -> Self {
        Self {
            version: SCENE_VERSION,
            name: name.to_string(),
            width,
            depth,
            agent: AgentStart {
                cell: agent,
                heading,
            },
            low_level: false,
            receptacles: Vec::new(),
            objects: BTreeMap::new(),
        }
    }

    pub fn with_receptacle(mut self, obj_type: &str, cell: [i32; 2], contents: &[&str]) -> Self {
        self.receptacles.push(ReceptacleSpec {
            obj_type: obj_type.to_string(),
            cell,
            contents: contents.iter().map(|s| s.to_string()).collect(),
        });
        self
    }

    pub fn with_objects(mut self, obj_type: &str, count: usize) -> Self {
        *self.objects.entry(obj_type.to_string()).or_default() += count;
        self
    }
}
