use super::types::ObjectId;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Agent actions in their canonical text form, e.g. `PutObject|Apple_01|Fridge_01`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    GotoObject(ObjectId),
    PickupObject(ObjectId),
    PutObject(ObjectId, ObjectId),
    OpenObject(ObjectId),
    CloseObject(ObjectId),
    SliceObject(ObjectId),
    MoveArm(f64, f64, f64),
    PickupMagnet,
    ReleaseMagnet,
}

#[derive(Debug, Error, PartialEq)]
#[error("malformed action `{0}`")]
pub struct ActionParseError(pub String);

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::MoveAhead => "MoveAhead",
            Action::RotateLeft => "RotateLeft",
            Action::RotateRight => "RotateRight",
            Action::GotoObject(_) => "GotoObject",
            Action::PickupObject(_) => "PickupObject",
            Action::PutObject(..) => "PutObject",
            Action::OpenObject(_) => "OpenObject",
            Action::CloseObject(_) => "CloseObject",
            Action::SliceObject(_) => "SliceObject",
            Action::MoveArm(..) => "MoveArm",
            Action::PickupMagnet => "PickupMagnet",
            Action::ReleaseMagnet => "ReleaseMagnet",
        }
    }

    pub fn is_navigation(&self) -> bool {
        matches!(
            self,
            Action::MoveAhead | Action::RotateLeft | Action::RotateRight | Action::GotoObject(_)
        )
    }

    /// Actions that change object state (everything but navigation and arm motion).
    pub fn is_interaction(&self) -> bool {
        matches!(
            self,
            Action::PickupObject(_)
                | Action::PutObject(..)
                | Action::OpenObject(_)
                | Action::CloseObject(_)
                | Action::SliceObject(_)
                | Action::PickupMagnet
                | Action::ReleaseMagnet
        )
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::GotoObject(id)
            | Action::PickupObject(id)
            | Action::OpenObject(id)
            | Action::CloseObject(id)
            | Action::SliceObject(id) => write!(f, "{}|{}", self.verb(), id),
            Action::PutObject(id, r) => write!(f, "PutObject|{id}|{r}"),
            Action::MoveArm(x, y, z) => write!(f, "MoveArm|{x}|{y}|{z}"),
            _ => f.write_str(self.verb()),
        }
    }
}

impl FromStr for Action {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ActionParseError(s.to_string());
        let parts: Vec<&str> = s.trim().split('|').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(bad());
        }
        let id = |i: usize| ObjectId(parts[i].to_string());
        let num = |i: usize| -> Result<f64, ActionParseError> {
            parts[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(bad)
        };
        let action = match (parts[0], parts.len()) {
            ("MoveAhead", 1) => Action::MoveAhead,
            ("RotateLeft", 1) => Action::RotateLeft,
            ("RotateRight", 1) => Action::RotateRight,
            ("PickupMagnet", 1) => Action::PickupMagnet,
            ("ReleaseMagnet", 1) => Action::ReleaseMagnet,
            ("GotoObject", 2) => Action::GotoObject(id(1)),
            ("PickupObject", 2) => Action::PickupObject(id(1)),
            ("OpenObject", 2) => Action::OpenObject(id(1)),
            ("CloseObject", 2) => Action::CloseObject(id(1)),
            ("SliceObject", 2) => Action::SliceObject(id(1)),
            ("PutObject", 3) => Action::PutObject(id(1), id(2)),
            ("MoveArm", 4) => Action::MoveArm(num(1)?, num(2)?, num(3)?),
            _ => return Err(bad()),
        };
        Ok(action)
    }
}

impl From<Action> for String {
    fn from(a: Action) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Action {
    type Error = ActionParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_canonical_forms() {
        assert_eq!(
            "PickupObject|Apple_01".parse::<Action>().unwrap(),
            Action::PickupObject("Apple_01".into())
        );
        assert_eq!(
            "PutObject|Apple_01|Fridge_01".parse::<Action>().unwrap(),
            Action::PutObject("Apple_01".into(), "Fridge_01".into())
        );
        assert_eq!("MoveAhead".parse::<Action>().unwrap(), Action::MoveAhead);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "Jump", "PickupObject", "PutObject|A", "MoveAhead|x", "MoveArm|a|0|0", "GotoObject||"] {
            assert!(bad.parse::<Action>().is_err(), "{bad}");
        }
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        let id = "[A-Z][a-z]{1,8}_[0-9]{2}".prop_map(|s| ObjectId(s));
        prop_oneof![
            Just(Action::MoveAhead),
            Just(Action::RotateLeft),
            Just(Action::RotateRight),
            Just(Action::PickupMagnet),
            Just(Action::ReleaseMagnet),
            id.clone().prop_map(Action::GotoObject),
            id.clone().prop_map(Action::PickupObject),
            id.clone().prop_map(Action::OpenObject),
            id.clone().prop_map(Action::SliceObject),
            (id.clone(), id).prop_map(|(a, b)| Action::PutObject(a, b)),
            (-0.05f64..0.05, -0.05f64..0.05, -0.05f64..0.05)
                .prop_map(|(x, y, z)| Action::MoveArm(x, y, z)),
        ]
    }

    proptest! {
        #[test]
        fn text_form_round_trips(a in arb_action()) {
            prop_assert_eq!(a.to_string().parse::<Action>().unwrap(), a);
        }
    }
}
