//! World-definition files (TOML).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Status, WorldError};

pub const DEFAULT_WORLD_NAME: &str = "irollan_valley.world";
pub const DEFAULT_WORLD: &str = include_str!("../../assets/irollan_valley.world");
pub const SUPPORTED_VERSION: u32 = 1;
pub const OUTSIDE: &str = "outside";

pub const FURNITURE_KINDS: [&str; 11] = [
    "table",
    "chair",
    "bed",
    "bookshelf",
    "storagebin",
    "wardrobe",
    "nightstand",
    "countertop",
    "foodshelf",
    "sinkbasin",
    "stoveburner",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDef {
    pub id: String,
    pub start: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaDef {
    pub name: String,
    #[serde(default)]
    pub doors: Vec<String>,
    #[serde(default)]
    pub furniture: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_by: Option<String>,
    #[serde(default)]
    pub status: Vec<Status>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDefinition {
    pub version: u32,
    pub agents: Vec<AgentDef>,
    pub areas: Vec<AreaDef>,
    #[serde(default)]
    pub items: Vec<ItemDef>,
}

/// Kind of a furniture id such as `"bookshelf 12"`.
pub fn furniture_kind(id: &str) -> Option<&'static str> {
    let (kind, number) = id.rsplit_once(' ')?;
    number.parse::<u32>().ok()?;
    FURNITURE_KINDS.iter().copied().find(|k| *k == kind)
}

/// Kind of an item id: the id with its numeric tokens removed
/// (`"book 12"` → `"book"`, `"10 dollar"` → `"dollar"`).
pub fn item_kind(id: &str) -> String {
    id.split(' ')
        .filter(|t| t.parse::<u64>().is_err())
        .collect::<Vec<_>>()
        .join(" ")
}

impl WorldDefinition {
    pub fn parse(text: &str) -> Result<Self, WorldError> {
        let def: Self = toml::from_str(text).map_err(|e| WorldError::Definition(e.to_string()))?;
        def.validate()?;
        Ok(def)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorldError::Definition(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The shipped IrollanValley world.
    pub fn irollan_valley() -> Self {
        Self::parse(DEFAULT_WORLD).expect("bundled world definition is valid")
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Definition(m));
        if self.version != SUPPORTED_VERSION {
            return bad(format!("unsupported world version {}", self.version));
        }
        let mut areas = BTreeSet::new();
        for a in &self.areas {
            if a.name.is_empty() || !areas.insert(a.name.as_str()) {
                return bad(format!("duplicate or empty area name {:?}", a.name));
            }
        }
        if !areas.contains(OUTSIDE) {
            return bad("world has no \"outside\" area".into());
        }
        let mut furniture = BTreeSet::new();
        for a in &self.areas {
            for d in &a.doors {
                if !areas.contains(d.as_str()) || d == &a.name {
                    return bad(format!("area {:?} has a door to unknown area {d:?}", a.name));
                }
            }
            for f in &a.furniture {
                if furniture_kind(f).is_none() {
                    return bad(format!("unrecognized furniture {f:?}"));
                }
                if !furniture.insert(f.as_str()) {
                    return bad(format!("duplicate furniture {f:?}"));
                }
            }
        }
        let mut agents = BTreeSet::new();
        for ag in &self.agents {
            if ag.id.is_empty() || ag.id.contains([' ', ',', ':']) || !agents.insert(ag.id.as_str()) {
                return bad(format!("invalid or duplicate agent id {:?}", ag.id));
            }
            if !areas.contains(ag.start.as_str()) {
                return bad(format!("agent {} starts in unknown area {:?}", ag.id, ag.start));
            }
        }
        let mut items = BTreeSet::new();
        for it in &self.items {
            if it.id.is_empty() || !items.insert(it.id.as_str()) {
                return bad(format!("invalid or duplicate item id {:?}", it.id));
            }
            let placed = match (&it.on, &it.floor, &it.held_by) {
                (Some(f), None, None) => furniture.contains(f.as_str()),
                (None, Some(a), None) => areas.contains(a.as_str()),
                (None, None, Some(ag)) => agents.contains(ag.as_str()),
                _ => false,
            };
            if !placed {
                return bad(format!("item {:?} needs exactly one valid location", it.id));
            }
            if it.status.contains(&Status::Damp) && it.status.contains(&Status::Hot) {
                return bad(format!("item {:?} cannot be both damp and hot", it.id));
            }
        }
        Ok(())
    }
}
