//! Object catalog: per-type flags loaded from a whitespace table.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use thiserror::Error;

const BUILTIN: &str = include_str!("../assets/catalog.txt");

#[derive(Debug, Error, PartialEq)]
#[error("catalog line {line}: {message}")]
pub struct CatalogError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectClass {
    Fixed,
    Movable,
    Item,
    Fixture,
}

/// Receptacles that change the state of objects put into them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApplianceRole {
    Cleaner,
    Heater,
    Cooler,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypeInfo {
    pub name: String,
    pub class: ObjectClass,
    pub openable: bool,
    pub sliceable: bool,
    pub knife: bool,
    pub lamp: bool,
    pub large: bool,
    pub small_only: bool,
    pub role: Option<ApplianceRole>,
    pub capacity: usize,
    pub prep: &'static str,
    pub height: f64,
}

impl TypeInfo {
    pub fn is_receptacle(&self) -> bool {
        matches!(self.class, ObjectClass::Fixed | ObjectClass::Movable)
    }

    pub fn is_pickupable(&self) -> bool {
        matches!(self.class, ObjectClass::Movable | ObjectClass::Item)
    }

    /// Whether `other` may be placed directly inside this receptacle.
    /// Capacity is not considered.
    pub fn accepts(&self, other: &TypeInfo) -> bool {
        if !self.is_receptacle() || !other.is_pickupable() {
            return false;
        }
        match self.class {
            ObjectClass::Movable => other.class == ObjectClass::Item && !other.large,
            _ => !(self.small_only && other.large),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Catalog {
    types: BTreeMap<String, TypeInfo>,
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut types = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| CatalogError { line, message };
            let cols: Vec<&str> = content.split_whitespace().collect();
            if cols.len() != 6 {
                return Err(err(format!("expected 6 columns, found {}", cols.len())));
            }
            let class = match cols[1] {
                "fixed" => ObjectClass::Fixed,
                "movable" => ObjectClass::Movable,
                "item" => ObjectClass::Item,
                "fixture" => ObjectClass::Fixture,
                other => return Err(err(format!("unknown class `{other}`"))),
            };
            let mut info = TypeInfo {
                name: cols[0].to_string(),
                class,
                openable: false,
                sliceable: false,
                knife: false,
                lamp: false,
                large: false,
                small_only: false,
                role: None,
                capacity: 0,
                prep: "on",
                height: 0.0,
            };
            if cols[2] != "-" {
                for flag in cols[2].split(',') {
                    match flag {
                        "openable" => info.openable = true,
                        "sliceable" => info.sliceable = true,
                        "knife" => info.knife = true,
                        "lamp" => info.lamp = true,
                        "large" => info.large = true,
                        "small-only" => info.small_only = true,
                        "cleaner" => info.role = Some(ApplianceRole::Cleaner),
                        "heater" => info.role = Some(ApplianceRole::Heater),
                        "cooler" => info.role = Some(ApplianceRole::Cooler),
                        other => return Err(err(format!("unknown flag `{other}`"))),
                    }
                }
            }
            if info.is_receptacle() {
                info.capacity = cols[3]
                    .parse()
                    .map_err(|_| err(format!("bad capacity `{}`", cols[3])))?;
                info.prep = match cols[4] {
                    "in" => "in",
                    "on" => "on",
                    other => return Err(err(format!("bad preposition `{other}`"))),
                };
            }
            if class == ObjectClass::Fixed {
                info.height = cols[5]
                    .parse()
                    .map_err(|_| err(format!("bad height `{}`", cols[5])))?;
            }
            if types.insert(info.name.clone(), info).is_some() {
                return Err(err(format!("duplicate type `{}`", cols[0])));
            }
        }
        Ok(Self { types })
    }

    pub fn get(&self, name: &str) -> Option<&TypeInfo> {
        self.types.get(name)
    }

    pub fn types(&self) -> impl Iterator<Item = &TypeInfo> {
        self.types.values()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// The catalog shipped in `assets/catalog.txt`.
pub fn builtin() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(|| Catalog::parse(BUILTIN).expect("builtin catalog parses"))
}

/// `CounterTop` -> `counter top`, `TVStand` -> `tv stand`.
pub fn humanize(type_name: &str) -> String {
    let chars: Vec<char> = type_name.chars().collect();
    let mut out = String::with_capacity(type_name.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if i > 0 && c.is_uppercase() {
            let prev_lower = chars[i - 1].is_lowercase();
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev_lower || (chars[i - 1].is_uppercase() && next_lower) {
                out.push(' ');
            }
        }
        out.extend(c.to_lowercase());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_loads() {
        let cat = builtin();
        assert!(cat.len() >= 40);
        let fridge = cat.get("Fridge").unwrap();
        assert!(fridge.openable && fridge.is_receptacle());
        assert_eq!(fridge.role, Some(ApplianceRole::Cooler));
        assert!(cat.get("Apple").unwrap().sliceable);
        assert!(cat.get("Knife").unwrap().knife);
        assert!(cat.get("DeskLamp").unwrap().lamp);
    }

    #[test]
    fn acceptance_rules() {
        let cat = builtin();
        let bowl = cat.get("Bowl").unwrap();
        let apple = cat.get("Apple").unwrap();
        let laptop = cat.get("Laptop").unwrap();
        let drawer = cat.get("Drawer").unwrap();
        let counter = cat.get("CounterTop").unwrap();
        assert!(bowl.accepts(apple));
        assert!(!bowl.accepts(laptop));
        assert!(!bowl.accepts(cat.get("Mug").unwrap()));
        assert!(!drawer.accepts(laptop));
        assert!(counter.accepts(laptop));
        assert!(counter.accepts(bowl));
        assert!(!apple.accepts(apple));
    }

    #[test]
    fn humanize_names() {
        assert_eq!(humanize("CounterTop"), "counter top");
        assert_eq!(humanize("DishSponge"), "dish sponge");
        assert_eq!(humanize("GarbageCan"), "garbage can");
        assert_eq!(humanize("TVStand"), "tv stand");
        assert_eq!(humanize("Apple"), "apple");
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = Catalog::parse("# header\nFoo fixed - x on 1.0\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = Catalog::parse("Foo gadget - - - -\n").unwrap_err();
        assert!(err.message.contains("gadget"));
    }
}
