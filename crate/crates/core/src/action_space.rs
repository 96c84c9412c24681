//! Zero-shot pruning of the action space by relevance score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, ScoreRequest};

pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 5.0;
/// Score assigned when the scorer twice fails to produce a number.
pub const NEUTRAL_SCORE: f64 = 3.0;
pub const DEFAULT_THRESHOLD: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionSpaceError {
    #[error("goal text is empty")]
    EmptyGoal,
    #[error("candidate action is empty")]
    EmptyCandidate,
    #[error("action list is empty")]
    EmptyActions,
    #[error("threshold {0} outside [1, 5]")]
    InvalidThreshold(f64),
    #[error("scoring {candidate:?} failed: {source}")]
    Backend {
        candidate: String,
        #[source]
        source: BackendError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCandidate {
    pub text: String,
    pub score: Option<f64>,
    pub eliminated: bool,
}

/// A rendered relevance question for one goal and action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationRequest {
    pub goal: String,
    pub action_space: Vec<String>,
    pub prompt: String,
}

pub fn render_elimination_prompt(
    goal: &str,
    action_space: &[String],
    candidate: &str,
) -> Result<String, ActionSpaceError> {
    if goal.is_empty() {
        return Err(ActionSpaceError::EmptyGoal);
    }
    if candidate.is_empty() {
        return Err(ActionSpaceError::EmptyCandidate);
    }
    Ok(format!(
        "Your task is to: {goal}. The actions you can take are: {}. The {candidate} will be relevant?",
        action_space.join(", ")
    ))
}

impl EliminationRequest {
    pub fn new(goal: &str, action_space: &[String], candidate: &str) -> Result<Self, ActionSpaceError> {
        Ok(Self {
            goal: goal.to_string(),
            action_space: action_space.to_vec(),
            prompt: render_elimination_prompt(goal, action_space, candidate)?,
        })
    }
}

/// First decimal number in a reply, if any.
pub fn parse_score(reply: &str) -> Option<f64> {
    let bytes = reply.as_bytes();
    let mut start = None;
    for (i, c) in reply.char_indices() {
        if c.is_ascii_digit() {
            start = Some(if i > 0 && bytes[i - 1] == b'-' { i - 1 } else { i });
            break;
        }
    }
    let start = start?;
    let tail = &reply[start..];
    let end = tail
        .char_indices()
        .skip(1)
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.'))
        .map_or(tail.len(), |(i, _)| i);
    tail[..end].trim_end_matches('.').parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Asks the scorer for a relevance score in [1, 5].
///
/// Out-of-range numbers are clamped. An unparseable reply is retried once,
/// then replaced by the neutral score.
pub fn score_action(
    request: &EliminationRequest,
    candidate: &str,
    scorer: &dyn Backend,
) -> Result<f64, ActionSpaceError> {
    let ask = || {
        scorer
            .score(&ScoreRequest {
                prompt: request.prompt.clone(),
            })
            .map_err(|source| ActionSpaceError::Backend {
                candidate: candidate.to_string(),
                source,
            })
    };
    for _ in 0..2 {
        if let Some(v) = parse_score(&ask()?) {
            return Ok(v.clamp(MIN_SCORE, MAX_SCORE));
        }
    }
    Ok(NEUTRAL_SCORE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub kept: Vec<ActionCandidate>,
    pub eliminated: Vec<ActionCandidate>,
}

impl Reduction {
    pub fn kept_texts(&self) -> Vec<String> {
        self.kept.iter().map(|c| c.text.clone()).collect()
    }
}

fn score_all(goal: &str, actions: &[String], scorer: &dyn Backend) -> Result<Vec<f64>, ActionSpaceError> {
    let score_one = |a: &String| {
        let req = EliminationRequest::new(goal, actions, a)?;
        score_action(&req, a, scorer)
    };
    let workers = scorer.max_concurrency().clamp(1, actions.len().max(1));
    if workers == 1 {
        return actions.iter().map(score_one).collect();
    }
    // Concurrent requests; results are reassembled in input order.
    let chunk = actions.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = actions
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(score_one).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut scores = Vec::with_capacity(actions.len());
        for h in handles {
            scores.extend(h.join().expect("scoring thread panicked")?);
        }
        Ok(scores)
    })
}

/// Splits actions into kept (score ≥ threshold) and eliminated, preserving
/// order. If nothing survives, the first highest-scoring action is kept.
pub fn reduce_action_space(
    goal: &str,
    actions: &[String],
    threshold: f64,
    scorer: &dyn Backend,
) -> Result<Reduction, ActionSpaceError> {
    if !(MIN_SCORE..=MAX_SCORE).contains(&threshold) {
        return Err(ActionSpaceError::InvalidThreshold(threshold));
    }
    if actions.is_empty() {
        return Err(ActionSpaceError::EmptyActions);
    }
    let scores = score_all(goal, actions, scorer)?;
    Ok(partition(actions, &scores, threshold))
}

/// Threshold partition of already-scored actions.
pub fn partition(actions: &[String], scores: &[f64], threshold: f64) -> Reduction {
    let mut keep: Vec<bool> = scores.iter().map(|s| *s >= threshold).collect();
    if !keep.iter().any(|k| *k) {
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        if let Some(k) = keep.get_mut(best) {
            *k = true;
        }
    }
    let mut reduction = Reduction {
        kept: Vec::new(),
        eliminated: Vec::new(),
    };
    for ((text, score), kept) in actions.iter().zip(scores).zip(keep) {
        let candidate = ActionCandidate {
            text: text.clone(),
            score: Some(*score),
            eliminated: !kept,
        };
        if kept {
            reduction.kept.push(candidate);
        } else {
            reduction.eliminated.push(candidate);
        }
    }
    reduction
}
