//! PAD emotion and the driver (motivation) update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{field_similarity, BlendConfig, PhenomenalField};

/// Emotion outputs are clamped to this magnitude so they stay strictly
/// inside (-1, 1) even where `tanh` rounds to ±1 in f64.
pub const OPEN_UNIT_BOUND: f64 = 1.0 - 1e-12;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("emotion weights must be nonnegative and sum to 1 (got {0})")]
    WeightSum(f64),
    #[error("affect signals must be finite and nonnegative")]
    InvalidSignals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmotionWeights {
    pub pleasure: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl Default for EmotionWeights {
    fn default() -> Self {
        Self {
            pleasure: 1.0 / 3.0,
            arousal: 1.0 / 3.0,
            dominance: 1.0 / 3.0,
        }
    }
}

impl EmotionWeights {
    pub fn validate(&self) -> Result<(), DriverError> {
        let sum = self.pleasure + self.arousal + self.dominance;
        let nonneg = [self.pleasure, self.arousal, self.dominance]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0);
        if !nonneg || (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(DriverError::WeightSum(sum));
        }
        Ok(())
    }
}

/// Pleasure, arousal, dominance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pad {
    pub pleasure: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl Pad {
    pub fn as_array(&self) -> [f64; 3] {
        [self.pleasure, self.arousal, self.dominance]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AffectSignals {
    pub desire: f64,
    pub pain: f64,
}

impl AffectSignals {
    pub fn new(desire: f64, pain: f64) -> Result<Self, DriverError> {
        if !(desire.is_finite() && pain.is_finite() && desire >= 0.0 && pain >= 0.0) {
            return Err(DriverError::InvalidSignals);
        }
        Ok(Self { desire, pain })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverState {
    pub pad: Pad,
    pub previous_arousal: f64,
    pub driver: f64,
    pub previous_bias: f64,
    pub weights: EmotionWeights,
}

impl DriverState {
    pub fn new(initial_driver: f64, weights: EmotionWeights) -> Result<Self, DriverError> {
        weights.validate()?;
        Ok(Self {
            pad: Pad::default(),
            previous_arousal: 0.0,
            driver: initial_driver,
            previous_bias: 0.0,
            weights,
        })
    }

    /// Installs a new emotion reading, remembering the previous arousal.
    pub fn set_pad(&mut self, pad: Pad) {
        self.previous_arousal = self.pad.arousal;
        self.pad = pad;
    }
}

fn open_unit(x: f64) -> f64 {
    x.clamp(-OPEN_UNIT_BOUND, OPEN_UNIT_BOUND)
}

pub fn compute_pleasure(signals: &AffectSignals) -> f64 {
    open_unit(signals.desire.tanh() - signals.pain.tanh())
}

/// Dissimilarity of two fields, `scale * (1 - similarity)`, floored at 0.
/// Fields that cannot be compared (empty) are treated as identical.
pub fn field_diff(
    x: &PhenomenalField,
    y: &PhenomenalField,
    diff_scale: f64,
    cfg: &BlendConfig,
) -> f64 {
    match field_similarity(x, y, cfg) {
        Ok(s) => (diff_scale * (1.0 - s)).max(0.0),
        Err(_) => 0.0,
    }
}

/// Weight of the `n`-th oldest retained frame (1-based) at step `t`.
pub fn recency_weight(n: u64, t: u64) -> f64 {
    (2 * n) as f64 / (t * (t - 1)) as f64
}

/// Recency-weighted change between the present and each retained frame.
///
/// `retention` is oldest first; the `n`-th entry gets weight `2n / (t(t-1))`.
/// Returns 0 for `t < 2` or an empty retention.
pub fn compute_arousal(
    pi: &PhenomenalField,
    retention: &[PhenomenalField],
    t: u64,
    diff_scale: f64,
    cfg: &BlendConfig,
) -> f64 {
    if t < 2 || retention.is_empty() {
        return 0.0;
    }
    let sum: f64 = retention
        .iter()
        .enumerate()
        .map(|(i, re)| recency_weight(i as u64 + 1, t) * field_diff(pi, re, diff_scale, cfg))
        .sum();
    open_unit(sum.tanh())
}

/// Surprise relative to what was anticipated at the previous step.
pub fn compute_dominance(
    pi: &PhenomenalField,
    previous_protention: Option<&PhenomenalField>,
    diff_scale: f64,
    cfg: &BlendConfig,
) -> f64 {
    match previous_protention {
        Some(pro) => open_unit(field_diff(pi, pro, diff_scale, cfg).tanh()),
        None => 0.0,
    }
}

pub fn compute_bias(state: &DriverState) -> Result<f64, DriverError> {
    state.weights.validate()?;
    let w = state.weights;
    let p = state.pad;
    Ok(w.pleasure * p.pleasure
        + w.dominance * p.dominance
        + w.arousal * (1.0 - (p.arousal - state.previous_arousal).abs()))
}

/// Need-scaled driver update. Returns the need term that was applied.
pub fn update_driver(state: &mut DriverState, new_bias: f64) -> f64 {
    let need = (new_bias - state.previous_bias).abs() / 2.0;
    state.driver += need * new_bias;
    state.previous_bias = new_bias;
    need
}
