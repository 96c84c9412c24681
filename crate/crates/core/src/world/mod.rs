//! The IrollanValley sandbox: areas, furniture, items, agents, and the text
//! interface agents see and act through.

pub mod action;
pub mod definition;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{primitive_kind, Action, PrimitiveKind};
pub use definition::{furniture_kind, item_kind, WorldDefinition, OUTSIDE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("unknown area {0:?}")]
    UnknownArea(String),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("unknown furniture {0:?}")]
    UnknownFurniture(String),
    #[error("invalid world definition: {0}")]
    Definition(String),
    #[error("world invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Clean,
    Damp,
    Hot,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Clean => "clean",
            Self::Damp => "damp",
            Self::Hot => "hot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    On(String),
    Floor(String),
    HeldBy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemState {
    pub id: String,
    pub status: BTreeSet<Status>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaState {
    pub name: String,
    pub doors: Vec<String>,
    pub furniture: Vec<String>,
    /// Agents present, in order of arrival.
    pub occupants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub area: String,
    pub activity: Option<String>,
    pub held: Vec<String>,
    pub engaged_with: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub from: String,
    pub content: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Parse,
    Illegal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure { kind: FailureKind, reason: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Self::Success)
    }

    fn parse(reason: impl Into<String>) -> Self {
        Self::Failure {
            kind: FailureKind::Parse,
            reason: reason.into(),
        }
    }

    fn illegal(reason: impl Into<String>) -> Self {
        Self::Failure {
            kind: FailureKind::Illegal,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Success => f.write_str("success"),
            Self::Failure {
                kind: FailureKind::Parse,
                reason,
            } => write!(f, "failure(parse): {reason}"),
            Self::Failure {
                kind: FailureKind::Illegal,
                reason,
            } => write!(f, "failure(illegal): {reason}"),
        }
    }
}

/// Chat-initiation counts: rows are initiators, columns receivers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub agents: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl InteractionMatrix {
    pub fn get(&self, from: &str, to: &str) -> Option<u64> {
        let i = self.agents.iter().position(|a| a == from)?;
        let j = self.agents.iter().position(|a| a == to)?;
        Some(self.counts[i][j])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Square CSV with a header row and the initiator in the first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("initiator");
        for a in &self.agents {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
        for (a, row) in self.agents.iter().zip(&self.counts) {
            out.push_str(a);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `a`, `a and b`, `a, b, and c`; `nothing` when empty.
pub fn join_see_list(parts: &[String]) -> String {
    match parts {
        [] => "nothing".to_string(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn status_suffix(status: &BTreeSet<Status>) -> String {
    if status.is_empty() {
        return String::new();
    }
    let words: Vec<String> = status.iter().map(Status::to_string).collect();
    format!(" in the {} status", words.join(" "))
}

/// The single mutable world. Agents are kept in lexicographic id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    areas: Vec<AreaState>,
    items: Vec<ItemState>,
    agents: BTreeMap<String, AgentState>,
    inbox: BTreeMap<String, Vec<ChatMessage>>,
    interactions: Vec<Vec<u64>>,
}

impl WorldState {
    pub fn from_definition(def: &WorldDefinition) -> Result<Self, WorldError> {
        def.validate()?;
        let mut areas: Vec<AreaState> = def
            .areas
            .iter()
            .map(|a| AreaState {
                name: a.name.clone(),
                doors: a.doors.clone(),
                furniture: a.furniture.clone(),
                occupants: Vec::new(),
            })
            .collect();
        let mut agents = BTreeMap::new();
        for ag in &def.agents {
            let area = areas
                .iter_mut()
                .find(|a| a.name == ag.start)
                .ok_or_else(|| WorldError::UnknownArea(ag.start.clone()))?;
            area.occupants.push(ag.id.clone());
            agents.insert(
                ag.id.clone(),
                AgentState {
                    area: ag.start.clone(),
                    activity: None,
                    held: Vec::new(),
                    engaged_with: None,
                },
            );
        }
        let mut items = Vec::with_capacity(def.items.len());
        for it in &def.items {
            let location = match (&it.on, &it.floor, &it.held_by) {
                (Some(f), _, _) => Location::On(f.clone()),
                (_, Some(a), _) => Location::Floor(a.clone()),
                (_, _, Some(ag)) => {
                    if let Some(state) = agents.get_mut(ag) {
                        state.held.push(it.id.clone());
                    }
                    Location::HeldBy(ag.clone())
                }
                _ => return Err(WorldError::Definition(format!("item {:?} has no location", it.id))),
            };
            items.push(ItemState {
                id: it.id.clone(),
                status: it.status.iter().copied().collect(),
                location,
            });
        }
        let n = agents.len();
        let inbox = agents.keys().map(|k| (k.clone(), Vec::new())).collect();
        let world = Self {
            areas,
            items,
            agents,
            inbox,
            interactions: vec![vec![0; n]; n],
        };
        world.check_invariants()?;
        Ok(world)
    }

    pub fn irollan_valley() -> Self {
        Self::from_definition(&WorldDefinition::irollan_valley()).expect("bundled world is consistent")
    }

    pub fn agent_ids(&self) -> Vec<String> {
        self.agents.keys().cloned().collect()
    }

    pub fn agent(&self, id: &str) -> Result<&AgentState, WorldError> {
        self.agents.get(id).ok_or_else(|| WorldError::UnknownAgent(id.to_string()))
    }

    pub fn areas(&self) -> &[AreaState] {
        &self.areas
    }

    pub fn area(&self, name: &str) -> Result<&AreaState, WorldError> {
        self.areas
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| WorldError::UnknownArea(name.to_string()))
    }

    pub fn items(&self) -> &[ItemState] {
        &self.items
    }

    pub fn item(&self, id: &str) -> Result<&ItemState, WorldError> {
        self.items
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| WorldError::UnknownItem(id.to_string()))
    }

    pub fn inbox(&self, agent: &str) -> Result<&[ChatMessage], WorldError> {
        self.agent(agent)?;
        Ok(self.inbox.get(agent).map_or(&[][..], Vec::as_slice))
    }

    /// Drops the agent's pending messages, returning them.
    pub fn clear_inbox(&mut self, agent: &str) -> Result<Vec<ChatMessage>, WorldError> {
        self.agent(agent)?;
        Ok(self.inbox.get_mut(agent).map(std::mem::take).unwrap_or_default())
    }

    pub fn interaction_matrix(&self) -> InteractionMatrix {
        InteractionMatrix {
            agents: self.agent_ids(),
            counts: self.interactions.clone(),
        }
    }

    fn agent_index(&self, id: &str) -> Option<usize> {
        self.agents.keys().position(|k| k == id)
    }

    fn area_mut(&mut self, name: &str) -> Result<&mut AreaState, WorldError> {
        self.areas
            .iter_mut()
            .find(|a| a.name == name)
            .ok_or_else(|| WorldError::UnknownArea(name.to_string()))
    }

    fn item_mut(&mut self, id: &str) -> Result<&mut ItemState, WorldError> {
        self.items
            .iter_mut()
            .find(|i| i.id == id)
            .ok_or_else(|| WorldError::UnknownItem(id.to_string()))
    }

    fn furniture_area(&self, furniture: &str) -> Option<&str> {
        self.areas
            .iter()
            .find(|a| a.furniture.iter().any(|f| f == furniture))
            .map(|a| a.name.as_str())
    }

    /// Items lying in an area (on its furniture or floor), with where they lie.
    fn items_in_area<'a>(&'a self, area: &'a AreaState) -> impl Iterator<Item = (&'a ItemState, &'a str)> + 'a {
        self.items.iter().filter_map(move |it| match &it.location {
            Location::On(f) if area.furniture.contains(f) => Some((it, f.as_str())),
            Location::Floor(a) if *a == area.name => Some((it, "floor")),
            _ => None,
        })
    }

    /// Renders what `agent` perceives.
    pub fn observe(&self, agent: &str) -> Result<String, WorldError> {
        let me = self.agent(agent)?;
        let area = self.area(&me.area)?;
        let mut seen = Vec::new();
        for other in area.occupants.iter().filter(|o| *o != agent) {
            match self.agents.get(other).and_then(|s| s.activity.as_ref()) {
                Some(act) => seen.push(format!("a person named {other} who is {act}")),
                None => seen.push(format!("a person named {other}")),
            }
        }
        seen.extend(area.doors.iter().map(|d| format!("a door to {d}")));
        seen.extend(area.furniture.iter().map(|f| format!("the {f}")));
        for (it, place) in self.items_in_area(area) {
            let place = if place == "floor" {
                "the floor".to_string()
            } else {
                format!("the {place}")
            };
            seen.push(format!("the {} placed on {place}{}", it.id, status_suffix(&it.status)));
        }
        let mut text = format!(
            "You are in {}. Looking around you, you see {}.",
            area.name,
            join_see_list(&seen)
        );
        if !me.held.is_empty() {
            let held: Vec<String> = me
                .held
                .iter()
                .map(|id| {
                    let status = self.item(id).map(|i| status_suffix(&i.status)).unwrap_or_default();
                    format!("the {id}{status}")
                })
                .collect();
            text.push_str(&format!(" You are holding {}.", held.join(", ")));
        }
        if let Some(act) = &me.activity {
            text.push_str(&format!(" You are {act}."));
        }
        for msg in self.inbox.get(agent).into_iter().flatten() {
            match &msg.content {
                Some(c) => text.push_str(&format!("\n{} says to you: {c}", msg.from)),
                None => text.push_str(&format!("\n{} wants to chat with you.", msg.from)),
            }
        }
        Ok(text)
    }

    /// Every currently legal action for `agent`; chat appears as its bare stem.
    pub fn action_space_for(&self, agent: &str) -> Result<Vec<String>, WorldError> {
        let me = self.agent(agent)?;
        let area = self.area(&me.area)?;
        let mut out = Vec::new();
        out.extend(area.doors.iter().map(|d| format!("go to {d}")));
        for (it, place) in self.items_in_area(area) {
            out.push(format!("take {} from {place}", it.id));
        }
        for held in &me.held {
            for f in &area.furniture {
                out.push(format!("put {held} in/on {f}"));
            }
        }
        out.extend(area.furniture.iter().map(|f| format!("use {f}")));
        out.extend(me.held.iter().map(|h| format!("use {h}")));
        for other in area.occupants.iter().filter(|o| *o != agent) {
            out.push(format!("chat with {other}"));
        }
        if area.name != OUTSIDE && area.doors.iter().any(|d| d == OUTSIDE) {
            out.push(format!("leave {}", area.name));
        }
        if let Some(partner) = &me.engaged_with {
            out.push(format!("leave {partner}"));
        }
        Ok(out)
    }

    /// Applies one action. Anything but `Success` leaves the world untouched.
    pub fn apply_action(&mut self, agent: &str, text: &str) -> Result<Outcome, WorldError> {
        self.agent(agent)?;
        let Some(action) = Action::parse(text) else {
            return Ok(Outcome::parse(format!("unrecognized action {text:?}")));
        };
        if let Action::Chat {
            content: Some(c), ..
        } = &action
        {
            if c.trim().is_empty() {
                return Ok(Outcome::parse("empty chat content"));
            }
        }
        let stem = action.stem();
        if !self.action_space_for(agent)?.contains(&stem) {
            return Ok(Outcome::illegal(format!("{stem:?} is not available here")));
        }
        match action {
            Action::GoTo(dest) => self.move_agent(agent, &dest, Some("moving"))?,
            Action::Leave(what) => {
                let me = self.agent(agent)?;
                if me.engaged_with.as_deref() == Some(what.as_str()) {
                    let me = self.agent_mut(agent)?;
                    me.engaged_with = None;
                    me.activity = None;
                } else {
                    self.move_agent(agent, OUTSIDE, Some("moving"))?;
                }
            }
            Action::Take { item, .. } => {
                self.item_mut(&item)?.location = Location::HeldBy(agent.to_string());
                let me = self.agent_mut(agent)?;
                me.held.push(item);
                me.activity = None;
            }
            Action::Put { item, onto } => {
                self.item_mut(&item)?.location = Location::On(onto);
                let me = self.agent_mut(agent)?;
                me.held.retain(|h| *h != item);
                me.activity = None;
            }
            Action::Use(target) => self.use_target(agent, &target)?,
            Action::Chat { target, content } => {
                if let (Some(i), Some(j)) = (self.agent_index(agent), self.agent_index(&target)) {
                    self.interactions[i][j] += 1;
                }
                self.inbox.entry(target.clone()).or_default().push(ChatMessage {
                    from: agent.to_string(),
                    content,
                });
                let me = self.agent_mut(agent)?;
                me.activity = Some("chatting".into());
                me.engaged_with = Some(target);
            }
        }
        Ok(Outcome::Success)
    }

    fn agent_mut(&mut self, id: &str) -> Result<&mut AgentState, WorldError> {
        self.agents.get_mut(id).ok_or_else(|| WorldError::UnknownAgent(id.to_string()))
    }

    fn move_agent(&mut self, agent: &str, dest: &str, activity: Option<&str>) -> Result<(), WorldError> {
        self.area(dest)?;
        let from = self.agent(agent)?.area.clone();
        self.area_mut(&from)?.occupants.retain(|o| o != agent);
        self.area_mut(dest)?.occupants.push(agent.to_string());
        let me = self.agent_mut(agent)?;
        me.area = dest.to_string();
        me.activity = activity.map(str::to_string);
        me.engaged_with = None;
        Ok(())
    }

    fn use_target(&mut self, agent: &str, target: &str) -> Result<(), WorldError> {
        let held = self.agent(agent)?.held.clone();
        let activity = match furniture_kind(target) {
            Some("sinkbasin") => {
                for id in &held {
                    let it = self.item_mut(id)?;
                    it.status.remove(&Status::Hot);
                    it.status.insert(Status::Clean);
                    it.status.insert(Status::Damp);
                }
                "washing".to_string()
            }
            Some("stoveburner") => {
                for id in &held {
                    let it = self.item_mut(id)?;
                    it.status.remove(&Status::Damp);
                    it.status.insert(Status::Hot);
                }
                "cooking".to_string()
            }
            Some("bed" | "chair") => "resting".to_string(),
            Some("bookshelf") => "reading".to_string(),
            Some(_) => format!("using the {target}"),
            None if item_kind(target) == "book" => "reading".to_string(),
            None => format!("using the {target}"),
        };
        self.agent_mut(agent)?.activity = Some(activity);
        Ok(())
    }

    /// Structural invariants: consistent locations, one area per agent,
    /// no item both damp and hot.
    pub fn check_invariants(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Invariant(m));
        for (id, st) in &self.agents {
            let count = self.areas.iter().filter(|a| a.occupants.contains(id)).count();
            if count != 1 || !self.area(&st.area)?.occupants.contains(id) {
                return bad(format!("agent {id} is not in exactly one area"));
            }
            for h in &st.held {
                if self.item(h)?.location != Location::HeldBy(id.clone()) {
                    return bad(format!("{id} holds {h} but the item is elsewhere"));
                }
            }
        }
        let mut ids = BTreeSet::new();
        for it in &self.items {
            if !ids.insert(it.id.as_str()) {
                return bad(format!("duplicate item {}", it.id));
            }
            if it.status.contains(&Status::Damp) && it.status.contains(&Status::Hot) {
                return bad(format!("item {} is both damp and hot", it.id));
            }
            match &it.location {
                Location::On(f) if self.furniture_area(f).is_none() => {
                    return bad(format!("item {} sits on unknown furniture {f}", it.id))
                }
                Location::Floor(a) if self.area(a).is_err() => {
                    return bad(format!("item {} lies in unknown area {a}", it.id))
                }
                Location::HeldBy(ag) => {
                    let holds = self.agents.get(ag).is_some_and(|s| s.held.iter().filter(|h| **h == it.id).count() == 1);
                    if !holds {
                        return bad(format!("item {} is not in {ag}'s hands", it.id));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    // Scenario editing, used to set up specific situations.

    /// Moves an agent to an area, appending it to the arrival order.
    pub fn place_agent(&mut self, agent: &str, area: &str) -> Result<(), WorldError> {
        let activity = self.agent(agent)?.activity.clone();
        self.move_agent(agent, area, activity.as_deref())
    }

    pub fn set_activity(&mut self, agent: &str, activity: Option<&str>) -> Result<(), WorldError> {
        self.agent_mut(agent)?.activity = activity.map(str::to_string);
        Ok(())
    }

    fn detach_item(&mut self, item: &str) -> Result<(), WorldError> {
        if let Location::HeldBy(owner) = self.item(item)?.location.clone() {
            self.agent_mut(&owner)?.held.retain(|h| h != item);
        }
        Ok(())
    }

    /// Puts an item into an agent's hands, wherever it was.
    pub fn give_item(&mut self, agent: &str, item: &str) -> Result<(), WorldError> {
        self.agent(agent)?;
        self.detach_item(item)?;
        self.item_mut(item)?.location = Location::HeldBy(agent.to_string());
        self.agent_mut(agent)?.held.push(item.to_string());
        Ok(())
    }

    /// Sets an item down on a furniture piece, wherever it was.
    pub fn place_item(&mut self, item: &str, furniture: &str) -> Result<(), WorldError> {
        if self.furniture_area(furniture).is_none() {
            return Err(WorldError::UnknownFurniture(furniture.to_string()));
        }
        self.detach_item(item)?;
        self.item_mut(item)?.location = Location::On(furniture.to_string());
        Ok(())
    }

    pub fn set_status(&mut self, item: &str, status: &[Status]) -> Result<(), WorldError> {
        let set: BTreeSet<Status> = status.iter().copied().collect();
        if set.contains(&Status::Damp) && set.contains(&Status::Hot) {
            return Err(WorldError::Invariant(format!("item {item} cannot be both damp and hot")));
        }
        self.item_mut(item)?.status = set;
        Ok(())
    }
}
