//! Locale and topic, resources, habitus and action: the social layer that
//! gates what agents do and redistributes resources among co-present agents.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, GenerateRequest, RankEntry, RankRequest};
use crate::driver::Pad;
use crate::world::{Action, PrimitiveKind, WorldError, WorldState};

/// Prefix of every logged action that the resource gate blocked.
pub const FILTER_MARKER: &str = "(This action has been filtered by LTRHA) ";
pub const INITIAL_BALANCE: i64 = 1;
pub const DEFAULT_BALANCE_BOUND: i64 = 10;
/// Smallest sub-environment that takes part in reallocation.
pub const MIN_MATRIX_AGENTS: usize = 3;
pub const HABITUS_TOP: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtrhaError {
    #[error("reallocation needs at least {MIN_MATRIX_AGENTS} agents, got {0}")]
    TooFewAgents(usize),
    #[error("rank {rank} outside 1..={n}")]
    InvalidRank { rank: usize, n: usize },
    #[error("invalid resource range s_min={s_min}, s_max={s_max}")]
    InvalidRange { s_min: i64, s_max: i64 },
    #[error("ranker reply is not a permutation of the occupants: {0:?}")]
    NotAPermutation(String),
    #[error("agent {0:?} has no ledger entry")]
    UnknownAgent(String),
    #[error("no actions to choose from")]
    EmptyActionSpace,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Emotional tone of a group: mean of `P·(A+1)/2`; 0 for nobody.
pub fn compute_topic(pads: &[Pad]) -> f64 {
    if pads.is_empty() {
        return 0.0;
    }
    pads.iter()
        .map(|p| p.pleasure * (p.arousal + 1.0) / 2.0)
        .sum::<f64>()
        / pads.len() as f64
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Chance that an agent holding `balance` resources gets to act.
pub fn act_probability(balance: i64) -> f64 {
    0.5 + sigmoid(balance as f64) / 2.0
}

/// Resources granted to the agent ranked `rank` (1 = best) among `n`.
pub fn rank_to_allocation(rank: usize, n: usize, s_min: i64, s_max: i64) -> Result<f64, LtrhaError> {
    if n < MIN_MATRIX_AGENTS {
        return Err(LtrhaError::TooFewAgents(n));
    }
    if rank == 0 || rank > n {
        return Err(LtrhaError::InvalidRank { rank, n });
    }
    if s_min < 0 || s_min > s_max {
        return Err(LtrhaError::InvalidRange { s_min, s_max });
    }
    let (j, n) = (rank as f64, n as f64);
    let half = n / 2.0;
    let spread = (s_max - s_min) as f64;
    let denom = (half - 1.0).abs();
    let s_min = s_min as f64;
    if n % 2.0 == 1.0 && j == (n + 1.0) / 2.0 {
        Ok(0.0)
    } else if j <= half {
        Ok(s_min + (j - half).abs() * spread / denom)
    } else {
        Ok(-(s_min + (j - half - 1.0).abs() * spread / denom))
    }
}

/// Nearest integer, halves rounded toward zero.
pub fn round_half_toward_zero(x: f64) -> i64 {
    let r = x.round();
    if (x - x.trunc()).abs() == 0.5 {
        x.trunc() as i64
    } else {
        r as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubEnvironment {
    pub area: String,
    pub locale: Vec<String>,
    pub occupants: Vec<String>,
    pub topic: f64,
}

impl SubEnvironment {
    /// Snapshot of one area; occupants without a known PAD are counted as neutral.
    pub fn from_world(world: &WorldState, area: &str, pads: &BTreeMap<String, Pad>) -> Result<Self, LtrhaError> {
        let a = world.area(area)?;
        let locale = a
            .doors
            .iter()
            .chain(&a.furniture)
            .cloned()
            .collect();
        let occupant_pads: Vec<Pad> = a
            .occupants
            .iter()
            .map(|o| pads.get(o).copied().unwrap_or_default())
            .collect();
        Ok(Self {
            area: a.name.clone(),
            locale,
            occupants: a.occupants.clone(),
            topic: compute_topic(&occupant_pads),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub area: String,
    pub ranking: Vec<String>,
    /// Balance change per agent, in ranking order.
    pub deltas: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceLedger {
    balances: BTreeMap<String, i64>,
    s_min: i64,
    s_max: i64,
    bound: i64,
}

impl ResourceLedger {
    pub fn new<I, S>(agents: I, s_min: i64, s_max: i64, bound: i64) -> Result<Self, LtrhaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if s_min <= 0 || s_min > s_max || bound < INITIAL_BALANCE {
            return Err(LtrhaError::InvalidRange { s_min, s_max });
        }
        Ok(Self {
            balances: agents.into_iter().map(|a| (a.into(), INITIAL_BALANCE)).collect(),
            s_min,
            s_max,
            bound,
        })
    }

    pub fn balance(&self, agent: &str) -> Result<i64, LtrhaError> {
        self.balances
            .get(agent)
            .copied()
            .ok_or_else(|| LtrhaError::UnknownAgent(agent.to_string()))
    }

    pub fn balances(&self) -> &BTreeMap<String, i64> {
        &self.balances
    }

    pub fn total(&self) -> i64 {
        self.balances.values().sum()
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    /// `Resource Allocation: AY: 1, LL: 1, ...` in agent order.
    pub fn render_line(&self) -> String {
        let parts: Vec<String> = self.balances.iter().map(|(a, b)| format!("{a}: {b}")).collect();
        format!("Resource Allocation: {}", parts.join(", "))
    }

    /// Applies a ranking (best first). Rank `j` and rank `n+1-j` form a pair:
    /// the rounded allocation moves from the lower-ranked agent to the higher,
    /// reduced as needed so both stay within `±bound`. Totals are conserved.
    pub fn apply_ranking(&mut self, area: &str, ranking: &[String]) -> Result<AllocationReport, LtrhaError> {
        let n = ranking.len();
        for a in ranking {
            self.balance(a)?;
        }
        let mut deltas = vec![0i64; n];
        for j in 1..=n / 2 {
            let give = round_half_toward_zero(rank_to_allocation(j, n, self.s_min, self.s_max)?);
            let (hi, lo) = (&ranking[j - 1], &ranking[n - j]);
            let room_hi = self.bound - self.balances[hi];
            let room_lo = self.balances[lo] + self.bound;
            let t = give.min(room_hi).min(room_lo).max(0);
            *self.balances.get_mut(hi).expect("checked") += t;
            *self.balances.get_mut(lo).expect("checked") -= t;
            deltas[j - 1] = t;
            deltas[n - j] = -t;
        }
        Ok(AllocationReport {
            area: area.to_string(),
            ranking: ranking.to_vec(),
            deltas,
        })
    }
}

pub fn render_ranker_prompt(entries: &[RankEntry], topic: f64) -> String {
    let mut out = format!(
        "Several people share one place. The mood of the scene (topic) is {topic}, on a scale from -1 to 1.\n"
    );
    for e in entries {
        out.push_str(&format!(
            "- {}: current action \"{}\", resources {}, goal \"{}\"\n",
            e.agent, e.action, e.balance, e.goal
        ));
    }
    out.push_str(
        "Rank every person from most to least conducive to the scene. \
         Reply with the ids only, separated by commas.",
    );
    out
}

/// Extracts a strict ordering of `expected` ids from a ranker reply.
pub fn parse_ranking(reply: &str, expected: &[String]) -> Result<Vec<String>, LtrhaError> {
    let wanted: BTreeSet<&str> = expected.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    let mut order = Vec::with_capacity(expected.len());
    for token in reply.split(|c: char| c == ',' || c.is_whitespace()) {
        let token = token.trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '\'');
        if wanted.contains(token) {
            if !seen.insert(token) {
                return Err(LtrhaError::NotAPermutation(reply.to_string()));
            }
            order.push(token.to_string());
        }
    }
    if order.len() != expected.len() {
        return Err(LtrhaError::NotAPermutation(reply.to_string()));
    }
    Ok(order)
}

/// Ranks one sub-environment and reallocates. On error the ledger is untouched.
pub fn matrix_step(
    ledger: &mut ResourceLedger,
    env: &SubEnvironment,
    actions: &BTreeMap<String, String>,
    goals: &BTreeMap<String, String>,
    ranker: &dyn Backend,
) -> Result<AllocationReport, LtrhaError> {
    let n = env.occupants.len();
    if n < MIN_MATRIX_AGENTS {
        return Err(LtrhaError::TooFewAgents(n));
    }
    let mut entries = Vec::with_capacity(n);
    for agent in &env.occupants {
        entries.push(RankEntry {
            agent: agent.clone(),
            action: actions.get(agent).cloned().unwrap_or_default(),
            balance: ledger.balance(agent)?,
            goal: goals.get(agent).cloned().unwrap_or_default(),
        });
    }
    let request = RankRequest {
        prompt: render_ranker_prompt(&entries, env.topic),
        entries,
        topic: env.topic,
    };
    let reply = ranker.rank(&request)?;
    let ranking = parse_ranking(&reply, &env.occupants)?;
    ledger.apply_ranking(&env.area, &ranking)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub executed: bool,
    pub probability: f64,
    pub draw: f64,
}

/// Decides with a given uniform draw in [0, 1).
pub fn gate_with_draw(balance: i64, draw: f64) -> GateDecision {
    let probability = act_probability(balance);
    GateDecision {
        executed: draw < probability,
        probability,
        draw,
    }
}

pub fn social_gate<R: Rng + ?Sized>(balance: i64, rng: &mut R) -> GateDecision {
    gate_with_draw(balance, rng.random::<f64>())
}

/// Logged form of an action.
pub fn mark_action(action: &str, executed: bool) -> String {
    if executed {
        action.to_string()
    } else {
        format!("{FILTER_MARKER}{action}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HabitEntry {
    pub area: String,
    pub kind: PrimitiveKind,
    pub count: u64,
}

/// How often an agent has done each kind of thing in each place.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HabitusRecord {
    counts: BTreeMap<String, BTreeMap<PrimitiveKind, u64>>,
    last_updated: Option<u64>,
}

impl HabitusRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts an executed action. Returns false for unparseable text.
    pub fn update(&mut self, area: &str, action: &str, step: u64) -> bool {
        let Some(parsed) = Action::parse(action) else {
            return false;
        };
        *self
            .counts
            .entry(area.to_string())
            .or_default()
            .entry(parsed.kind())
            .or_default() += 1;
        self.last_updated = Some(step);
        true
    }

    pub fn count(&self, area: &str, kind: PrimitiveKind) -> u64 {
        self.counts.get(area).and_then(|m| m.get(&kind)).copied().unwrap_or(0)
    }

    pub fn last_updated(&self) -> Option<u64> {
        self.last_updated
    }

    /// Most frequent (area, kind) pairs; ties by area, then kind.
    pub fn top(&self, k: usize) -> Vec<HabitEntry> {
        let mut all: Vec<HabitEntry> = self
            .counts
            .iter()
            .flat_map(|(area, m)| {
                m.iter().map(move |(kind, count)| HabitEntry {
                    area: area.clone(),
                    kind: kind.clone(),
                    count: *count,
                })
            })
            .collect();
        all.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.area.cmp(&b.area)).then_with(|| a.kind.cmp(&b.kind)));
        all.truncate(k);
        all
    }

    pub fn render_top(&self, k: usize) -> String {
        let top = self.top(k);
        if top.is_empty() {
            return "none yet".to_string();
        }
        top.iter()
            .map(|h| format!("{} in {} ({} times)", h.kind, h.area, h.count))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Everything the generator sees when composing an action.
#[derive(Debug, Clone)]
pub struct ComposeContext<'a> {
    pub observation: &'a str,
    pub channel_summary: &'a str,
    pub driver: f64,
    pub habitus: &'a HabitusRecord,
    pub balance: i64,
    pub topic: f64,
    pub goal: &'a str,
    /// Candidate actions, best first.
    pub actions: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub thought: String,
    pub action: String,
    pub goal: Option<String>,
    pub regenerated: bool,
    pub defaulted: bool,
}

pub fn render_generator_prompt(ctx: &ComposeContext<'_>) -> String {
    format!(
        "Observation: {}\n\
         Consciousness: {}\n\
         Driver: {}\n\
         Habits: {}\n\
         Resources: {}\n\
         Topic: {}\n\
         Goal: {}\n\
         Available actions: {}\n\
         Answer with a line \"Thought: ...\" followed by a line \"Action: ...\" naming exactly one available action. \
         A chat action may carry content as \"chat with NAME: CONTENT\". \
         You may add a line \"Goal: ...\" to revise your goal.",
        ctx.observation,
        ctx.channel_summary,
        ctx.driver,
        ctx.habitus.render_top(HABITUS_TOP),
        ctx.balance,
        ctx.topic,
        ctx.goal,
        ctx.actions.join("; "),
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Generation {
    pub thought: Option<String>,
    pub action: Option<String>,
    pub goal: Option<String>,
}

/// Splits a reply into its labelled sections. Unlabelled lines extend the
/// section before them.
pub fn parse_generation(reply: &str) -> Generation {
    #[derive(Clone, Copy)]
    enum Slot {
        None,
        Thought,
        Action,
        Goal,
    }
    let mut out = Generation::default();
    let mut slot = Slot::None;
    for line in reply.lines() {
        let trimmed = line.trim();
        let (next, rest) = if let Some(r) = trimmed.strip_prefix("Thought:") {
            (Slot::Thought, r)
        } else if let Some(r) = trimmed.strip_prefix("Action:") {
            (Slot::Action, r)
        } else if let Some(r) = trimmed.strip_prefix("Goal:") {
            (Slot::Goal, r)
        } else {
            if let (Slot::Thought, Some(t)) = (slot, out.thought.as_mut()) {
                if !trimmed.is_empty() {
                    t.push(' ');
                    t.push_str(trimmed);
                }
            }
            continue;
        };
        slot = next;
        let value = rest.trim().to_string();
        match next {
            Slot::Thought => out.thought = Some(value),
            Slot::Action => out.action = Some(value),
            Slot::Goal => out.goal = Some(value).filter(|g| !g.is_empty()),
            Slot::None => {}
        }
    }
    out
}

/// Whether `action` names one of `actions`; chats may add content to a listed stem.
pub fn action_in_space(action: &str, actions: &[String]) -> bool {
    if actions.iter().any(|a| a == action) {
        return true;
    }
    match Action::parse(action) {
        Some(parsed @ Action::Chat { content: Some(_), .. }) => actions.contains(&parsed.stem()),
        _ => false,
    }
}

/// Asks the generator for a thought and an action. An action outside the
/// space is regenerated once, then replaced by the first candidate.
pub fn compose_action(ctx: &ComposeContext<'_>, generator: &dyn Backend) -> Result<Composition, LtrhaError> {
    let first = ctx.actions.first().ok_or(LtrhaError::EmptyActionSpace)?;
    let request = GenerateRequest {
        prompt: render_generator_prompt(ctx),
        actions: ctx.actions.to_vec(),
    };
    let mut last = Generation::default();
    for attempt in 0..2 {
        let g = parse_generation(&generator.generate(&request)?);
        if let Some(action) = g.action.as_deref().filter(|a| action_in_space(a, ctx.actions)) {
            return Ok(Composition {
                thought: g.thought.clone().unwrap_or_default(),
                action: action.to_string(),
                goal: g.goal,
                regenerated: attempt > 0,
                defaulted: false,
            });
        }
        last = g;
    }
    Ok(Composition {
        thought: last.thought.unwrap_or_default(),
        action: first.clone(),
        goal: last.goal,
        regenerated: true,
        defaulted: true,
    })
}
