//! Text to phenomenal field.
//!
//! An observation is cut into clauses and each clause becomes one row: its
//! embedding, a polar angle and azimuth hashed from the clause text, and a
//! radius equal to the share of the clause's tokens the agent has not seen
//! in its recent observations.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::f64::consts::{PI, TAU};

use crate::backend::{seeded_hash, Backend, MockBackend};
use crate::field::{FieldRow, PhenomenalField, Position};

/// Splits text into clauses on line breaks, sentence ends and commas.
pub fn split_clauses(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        for sentence in line.split(". ") {
            for part in sentence.split(", ") {
                let part = part.trim().trim_end_matches('.').trim();
                let part = part.strip_prefix("and ").unwrap_or(part).trim();
                if !part.is_empty() {
                    out.push(part.to_string());
                }
            }
        }
    }
    out
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Hashed angular position of a clause with the given radius.
pub fn clause_position(seed: u64, clause: &str, gamma: f64) -> Position {
    let theta = unit_from_hash(seeded_hash(seed, "theta", clause)) * PI;
    let phi = unit_from_hash(seeded_hash(seed, "phi", clause)) * TAU;
    Position::normalized(theta, phi, gamma)
}

/// Tokens of an agent's most recent observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecentTokens {
    window: usize,
    frames: VecDeque<BTreeSet<String>>,
}

impl RecentTokens {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            frames: VecDeque::new(),
        }
    }

    /// Share of the clause's tokens absent from every remembered observation.
    pub fn novelty(&self, clause: &str) -> f64 {
        let all: Vec<String> = tokens(clause).collect();
        if all.is_empty() {
            return 0.0;
        }
        let unseen = all
            .iter()
            .filter(|t| !self.frames.iter().any(|f| f.contains(*t)))
            .count();
        unseen as f64 / all.len() as f64
    }

    pub fn push(&mut self, text: &str) {
        self.frames.push_back(tokens(text).collect());
        while self.frames.len() > self.window {
            self.frames.pop_front();
        }
    }
}

/// Embeds clauses through a backend, falling back to the local hashed
/// embedder when the backend fails. Embeddings are cached by text.
pub struct Perceiver {
    seed: u64,
    dimension: usize,
    fallback: MockBackend,
    cache: HashMap<String, Vec<f64>>,
}

impl Perceiver {
    pub fn new(seed: u64, dimension: usize) -> Self {
        Self {
            seed,
            dimension,
            fallback: MockBackend::new(seed, dimension),
            cache: HashMap::new(),
        }
    }

    pub fn embed(&mut self, text: &str, backend: &dyn Backend, faults: &mut Vec<String>) -> Vec<f64> {
        if let Some(v) = self.cache.get(text) {
            return v.clone();
        }
        let v = match backend.embed(text) {
            Ok(v) => v,
            Err(e) => {
                faults.push(format!("embedding fell back to local hashing: {e}"));
                self.fallback
                    .embed(text)
                    .unwrap_or_else(|_| vec![0.0; self.dimension])
            }
        };
        self.cache.insert(text.to_string(), v.clone());
        v
    }

    pub fn row(&mut self, clause: &str, gamma: f64, backend: &dyn Backend, faults: &mut Vec<String>) -> FieldRow {
        let embedding = self.embed(clause, backend, faults);
        FieldRow::new(embedding, clause_position(self.seed, clause, gamma))
    }

    /// One row per clause; empty text gives an empty field.
    pub fn field(
        &mut self,
        text: &str,
        recent: &RecentTokens,
        backend: &dyn Backend,
        faults: &mut Vec<String>,
    ) -> PhenomenalField {
        let rows: Vec<FieldRow> = split_clauses(text)
            .iter()
            .map(|c| self.row(c, recent.novelty(c), backend, faults))
            .collect();
        PhenomenalField::new(rows).unwrap_or_else(|e| {
            faults.push(format!("perception produced inconsistent rows: {e}"));
            PhenomenalField::empty()
        })
    }
}
