use serde::{Deserialize, Serialize};
use std::fmt;

/// Stable object identifier, `<Type>_<nn>` (e.g. `Apple_01`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

impl ObjectId {
    pub fn new(obj_type: &str, ordinal: usize) -> Self {
        Self(format!("{obj_type}_{ordinal:02}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Type prefix of the identifier.
    pub fn type_name(&self) -> &str {
        match self.0.rsplit_once('_') {
            Some((ty, n)) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => ty,
            _ => &self.0,
        }
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::N => (0, 1),
            Heading::E => (1, 0),
            Heading::S => (0, -1),
            Heading::W => (-1, 0),
        }
    }

    pub fn left(self) -> Self {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    pub fn right(self) -> Self {
        match self {
            Heading::N => Heading::E,
            Heading::E => Heading::S,
            Heading::S => Heading::W,
            Heading::W => Heading::N,
        }
    }

    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn step(self, heading: Heading) -> Self {
        let (dx, dy) = heading.delta();
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn dist2(self, other: Cell) -> i32 {
        let (dx, dy) = (other.x - self.x, other.y - self.y);
        dx * dx + dy * dy
    }
}

impl From<[i32; 2]> for Cell {
    fn from(c: [i32; 2]) -> Self {
        Self::new(c[0], c[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub heading: Heading,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: Cell,
    pub heading: Heading,
    /// Arm endpoint offset from the arm base, world-aligned (east, north, up), meters.
    pub arm_offset: [f64; 3],
}

impl AgentPose {
    pub fn pose(&self) -> Pose {
        Pose {
            cell: self.cell,
            heading: self.heading,
        }
    }
}

/// Where an object currently lives.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Parent {
    Floor,
    Inventory,
    Receptacle(ObjectId),
}

impl From<Parent> for String {
    fn from(p: Parent) -> String {
        match p {
            Parent::Floor => "floor".into(),
            Parent::Inventory => "inventory".into(),
            Parent::Receptacle(id) => id.0,
        }
    }
}

impl From<String> for Parent {
    fn from(s: String) -> Parent {
        match s.as_str() {
            "floor" => Parent::Floor,
            "inventory" => Parent::Inventory,
            _ => Parent::Receptacle(ObjectId(s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub obj_type: String,
    pub pickupable: bool,
    pub openable: bool,
    pub sliceable: bool,
    pub receptacle: bool,
    pub is_open: bool,
    pub is_sliced: bool,
    pub is_clean: bool,
    pub is_hot: bool,
    pub is_cool: bool,
    pub parent: Parent,
    /// Grid cell of fixed receptacles; everything else inherits its root's cell.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub anchor: Option<Cell>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureReason {
    Collision,
    InvalidAction,
    Deadlock,
    None,
}
