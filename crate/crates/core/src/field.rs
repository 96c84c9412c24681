//! Phenomenal fields: rows of (embedding, spherical position), the similarity
//! measures between them, and conceptual blending of two fields.
//!
//! Everything here is a pure function of its inputs. Randomness enters only
//! through the `rng` argument of [`blend`], so a seeded generator makes every
//! result reproducible.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for the exact-match test and for row membership.
pub const MATCH_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("field is empty")]
    EmptyField,
    #[error("invalid position (theta={theta}, phi={phi}, gamma={gamma})")]
    InvalidPosition { theta: f64, phi: f64, gamma: f64 },
    #[error("flat row needs at least 3 components, got {0}")]
    ShortRow(usize),
    #[error("invalid blend config: {0}")]
    InvalidConfig(String),
}

/// Spherical coordinates of a row: polar angle, azimuth and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub theta: f64,
    pub phi: f64,
    pub gamma: f64,
}

impl Position {
    pub fn new(theta: f64, phi: f64, gamma: f64) -> Result<Self, FieldError> {
        let valid = theta.is_finite()
            && phi.is_finite()
            && gamma.is_finite()
            && (0.0..=PI).contains(&theta)
            && (0.0..TAU).contains(&phi)
            && gamma >= 0.0;
        if valid {
            Ok(Self { theta, phi, gamma })
        } else {
            Err(FieldError::InvalidPosition { theta, phi, gamma })
        }
    }

    /// Builds a position, clamping theta and gamma and wrapping phi into range.
    pub fn normalized(theta: f64, phi: f64, gamma: f64) -> Self {
        Self {
            theta: theta.clamp(0.0, PI),
            phi: wrap_angle(phi),
            gamma: gamma.max(0.0),
        }
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self.theta - other.theta).abs() <= MATCH_EPSILON
            && circular_delta(self.phi, other.phi).abs() <= MATCH_EPSILON
            && (self.gamma - other.gamma).abs() <= MATCH_EPSILON
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed shortest-arc difference `to - from`, in `(-π, π]`.
pub fn circular_delta(from: f64, to: f64) -> f64 {
    let mut d = (to - from).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    d
}

/// One row of a phenomenal field.
///
/// Serializes as a flat array `[N_1, .., N_n, theta, phi, gamma]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct FieldRow {
    embedding: Vec<f64>,
    position: Position,
    norm: f64,
}

impl PartialEq for FieldRow {
    fn eq(&self, other: &Self) -> bool {
        self.embedding == other.embedding && self.position == other.position
    }
}

impl FieldRow {
    pub fn new(embedding: Vec<f64>, position: Position) -> Self {
        let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            embedding,
            position,
            norm,
        }
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn dimension(&self) -> usize {
        self.embedding.len()
    }

    pub fn with_position(&self, position: Position) -> Self {
        Self {
            embedding: self.embedding.clone(),
            position,
            norm: self.norm,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.embedding.len() + 3);
        flat.extend_from_slice(&self.embedding);
        flat.extend([self.position.theta, self.position.phi, self.position.gamma]);
        flat
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self, FieldError> {
        if flat.len() < 3 {
            return Err(FieldError::ShortRow(flat.len()));
        }
        let n = flat.len() - 3;
        let position = Position::new(flat[n], flat[n + 1], flat[n + 2])?;
        Ok(Self::new(flat[..n].to_vec(), position))
    }

    /// Component-wise equality within [`MATCH_EPSILON`].
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.embedding.len() == other.embedding.len()
            && self
                .embedding
                .iter()
                .zip(&other.embedding)
                .all(|(a, b)| (a - b).abs() <= MATCH_EPSILON)
            && self.position.approx_eq(&other.position)
    }
}

impl From<FieldRow> for Vec<f64> {
    fn from(row: FieldRow) -> Self {
        row.to_flat()
    }
}

impl TryFrom<Vec<f64>> for FieldRow {
    type Error = FieldError;

    fn try_from(flat: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_flat(&flat)
    }
}

/// An ordered set of rows sharing one embedding dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhenomenalField {
    rows: Vec<FieldRow>,
}

impl PhenomenalField {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(rows: Vec<FieldRow>) -> Result<Self, FieldError> {
        if let Some(first) = rows.first() {
            let expected = first.dimension();
            if let Some(bad) = rows.iter().find(|r| r.dimension() != expected) {
                return Err(FieldError::DimensionMismatch {
                    expected,
                    found: bad.dimension(),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[FieldRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<FieldRow> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Embedding dimension, or `None` for an empty field.
    pub fn dimension(&self) -> Option<usize> {
        self.rows.first().map(FieldRow::dimension)
    }

    pub fn contains_approx(&self, row: &FieldRow) -> bool {
        self.rows.iter().any(|r| r.approx_eq(row))
    }

    /// Concatenates two fields (no deduplication).
    pub fn concat(&self, other: &Self) -> Result<Self, FieldError> {
        check_dims(self, other)?;
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(Self { rows })
    }

    fn push(&mut self, row: FieldRow) {
        self.rows.push(row);
    }
}

/// Weights and thresholds for similarity and blending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendConfig {
    pub similarity_threshold: f64,
    pub blend_probability: f64,
    pub weight_embedding: f64,
    pub weight_position: f64,
    pub weight_gamma: f64,
    pub weight_theta: f64,
    pub weight_phi: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.85,
            blend_probability: 0.3,
            weight_embedding: 0.7,
            weight_position: 0.3,
            weight_gamma: 1.0,
            weight_theta: 1.0,
            weight_phi: 1.0,
        }
    }
}

impl BlendConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |msg: &str| Err(FieldError::InvalidConfig(msg.to_string()));
        if !(0.0..=1.0).contains(&self.blend_probability) {
            return bad("blend_probability must lie in [0, 1]");
        }
        if !self.similarity_threshold.is_finite() {
            return bad("similarity_threshold must be finite");
        }
        let weights = [
            self.weight_embedding,
            self.weight_position,
            self.weight_gamma,
            self.weight_theta,
            self.weight_phi,
        ];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("weights must be finite and nonnegative");
        }
        if (self.weight_embedding + self.weight_position - 1.0).abs() > MATCH_EPSILON {
            return bad("weight_embedding + weight_position must equal 1");
        }
        Ok(())
    }
}

fn check_dims(x: &PhenomenalField, y: &PhenomenalField) -> Result<(), FieldError> {
    match (x.dimension(), y.dimension()) {
        (Some(a), Some(b)) if a != b => Err(FieldError::DimensionMismatch {
            expected: a,
            found: b,
        }),
        _ => Ok(()),
    }
}

pub fn spherical_similarity(a: &Position, b: &Position, cfg: &BlendConfig) -> f64 {
    let radial = cfg.weight_gamma * (a.gamma - b.gamma).abs().tanh();
    let polar = cfg.weight_theta * (a.theta - b.theta).abs() / PI;
    let azimuth = cfg.weight_phi * (a.phi - b.phi).abs() / TAU;
    1.0 - (radial + polar + azimuth) / 3.0
}

/// Cosine similarity with the zero-norm convention: a zero vector is
/// unrelated to anything except another zero vector.
// Four independent lanes so the compiler can vectorize; the summation order
// is fixed, so results stay reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (p, q) in ca.zip(cb) {
        for k in 0..4 {
            lanes[k] += p[k] * q[k];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

pub fn cosine(x: &FieldRow, y: &FieldRow) -> f64 {
    match (x.norm == 0.0, y.norm == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => {
            (dot(&x.embedding, &y.embedding) / (x.norm * y.norm)).clamp(-1.0, 1.0)
        }
    }
}

pub fn row_similarity(x: &FieldRow, y: &FieldRow, cfg: &BlendConfig) -> Result<f64, FieldError> {
    if x.dimension() != y.dimension() {
        return Err(FieldError::DimensionMismatch {
            expected: x.dimension(),
            found: y.dimension(),
        });
    }
    Ok(row_similarity_unchecked(x, y, cfg))
}

fn row_similarity_unchecked(x: &FieldRow, y: &FieldRow, cfg: &BlendConfig) -> f64 {
    cfg.weight_embedding * cosine(x, y)
        + cfg.weight_position * spherical_similarity(&x.position, &y.position, cfg)
}

/// Aggregate similarity of two fields.
///
/// Rows are paired greedily by descending row similarity, each row used at
/// most once, until the smaller field is exhausted. The paired sum is divided
/// by the larger row count, so unmatched rows count as zero.
pub fn field_similarity(
    x: &PhenomenalField,
    y: &PhenomenalField,
    cfg: &BlendConfig,
) -> Result<f64, FieldError> {
    if x.is_empty() || y.is_empty() {
        return Err(FieldError::EmptyField);
    }
    check_dims(x, y)?;

    // Orient so that (small, large) does not depend on argument order.
    let (small, large) = if y.len() < x.len() { (y, x) } else { (x, y) };
    let mut pairs = Vec::with_capacity(small.len() * large.len());
    for (i, a) in small.rows.iter().enumerate() {
        for (j, b) in large.rows.iter().enumerate() {
            pairs.push((row_similarity_unchecked(a, b, cfg), i, j));
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));

    let mut small_used = vec![false; small.len()];
    let mut large_used = vec![false; large.len()];
    let mut remaining = small.len();
    let mut total = 0.0;
    for (s, i, j) in pairs {
        if remaining == 0 {
            break;
        }
        if small_used[i] || large_used[j] {
            continue;
        }
        small_used[i] = true;
        large_used[j] = true;
        remaining -= 1;
        total += s;
    }
    Ok(total / x.len().max(y.len()) as f64)
}

/// Component-wise mean of two rows; the azimuth is averaged along the shorter arc.
pub fn average_rows(x: &FieldRow, y: &FieldRow) -> Result<FieldRow, FieldError> {
    if x.dimension() != y.dimension() {
        return Err(FieldError::DimensionMismatch {
            expected: x.dimension(),
            found: y.dimension(),
        });
    }
    let embedding = x
        .embedding
        .iter()
        .zip(&y.embedding)
        .map(|(a, b)| (a + b) / 2.0)
        .collect();
    let (p, q) = (x.position, y.position);
    let phi = wrap_angle(p.phi + circular_delta(p.phi, q.phi) / 2.0);
    let position = Position {
        theta: (p.theta + q.theta) / 2.0,
        phi,
        gamma: (p.gamma + q.gamma) / 2.0,
    };
    Ok(FieldRow::new(embedding, position))
}

fn push_unique(z: &mut PhenomenalField, row: &FieldRow) {
    if !z.contains_approx(row) {
        z.push(row.clone());
    }
}

/// Conceptual blending of two fields.
///
/// For every row of `x`, the first row of `y` whose similarity reaches the
/// threshold decides the outcome: an exact match contributes the averaged row,
/// a partial match contributes both rows. Rows that are not in z and were not
/// averaged are then admitted independently with the configured probability,
/// `x` first.
pub fn blend<R: Rng + ?Sized>(
    x: &PhenomenalField,
    y: &PhenomenalField,
    cfg: &BlendConfig,
    rng: &mut R,
) -> Result<PhenomenalField, FieldError> {
    check_dims(x, y)?;
    let mut z = PhenomenalField::empty();
    // Rows already represented in z by their average.
    let mut averaged = vec![false; x.len() + y.len()];

    for (i, xi) in x.rows.iter().enumerate() {
        for (j, yj) in y.rows.iter().enumerate() {
            let s = row_similarity_unchecked(xi, yj, cfg);
            if s < cfg.similarity_threshold {
                continue;
            }
            if (s - 1.0).abs() <= MATCH_EPSILON {
                let avg = average_rows(xi, yj)?;
                push_unique(&mut z, &avg);
                averaged[i] = true;
                averaged[x.len() + j] = true;
            } else {
                push_unique(&mut z, xi);
                push_unique(&mut z, yj);
            }
            break;
        }
    }

    let p = cfg.blend_probability.clamp(0.0, 1.0);
    for (k, row) in x.rows.iter().chain(&y.rows).enumerate() {
        if !averaged[k] && !z.contains_approx(row) && rng.random_bool(p) {
            z.push(row.clone());
        }
    }
    Ok(z)
}
