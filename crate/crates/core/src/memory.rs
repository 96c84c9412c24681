//! Long-term memory: frame storage, arousal-keyed compression, mood-congruent
//! activation, and the consciousness channel with its protention.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{
    blend, circular_delta, field_similarity, row_similarity, BlendConfig, FieldError,
    PhenomenalField, Position,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("frame timestamp {found} is not after the latest stored timestamp {latest}")]
    OutOfOrder { latest: u64, found: u64 },
    #[error("memory segment is empty")]
    EmptySegment,
    #[error("store capacity must be positive and the compression window at least 2")]
    InvalidCapacity,
    #[error("protention predictor failed: {0}")]
    Predictor(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// First and last simulation step covered by a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub first: u64,
    pub last: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryFrame {
    pub field: PhenomenalField,
    pub timestamp: u64,
    pub arousal: f64,
    pub pleasure: f64,
    pub compressed: bool,
    pub span: Span,
}

impl MemoryFrame {
    /// A fresh, uncompressed frame recorded at `timestamp`.
    pub fn new(field: PhenomenalField, timestamp: u64, arousal: f64, pleasure: f64) -> Self {
        Self {
            field,
            timestamp,
            arousal,
            pleasure,
            compressed: false,
            span: Span {
                first: timestamp,
                last: timestamp,
            },
        }
    }
}

/// Log-friendly summary of one stored frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub timestamp: u64,
    pub span: Span,
    pub arousal: f64,
    pub pleasure: f64,
    pub compressed: bool,
    pub rows: usize,
}

/// Frame with maximal arousal; the earliest one wins ties.
pub fn select_key_frame(segment: &[MemoryFrame]) -> Result<&MemoryFrame, MemoryError> {
    let mut best: Option<&MemoryFrame> = None;
    for frame in segment {
        match best {
            Some(b) if frame.arousal <= b.arousal => {}
            _ => best = Some(frame),
        }
    }
    best.ok_or(MemoryError::EmptySegment)
}

/// Compresses a segment into one frame by folding `blend` over the segment,
/// seeded with the key frame.
pub fn compress_segment<R: Rng + ?Sized>(
    segment: &[MemoryFrame],
    cfg: &BlendConfig,
    rng: &mut R,
) -> Result<MemoryFrame, MemoryError> {
    let key = select_key_frame(segment)?;
    let mut acc = key.field.clone();
    for frame in segment {
        acc = blend(&acc, &frame.field, cfg, rng)?;
    }
    let first = segment.first().map(|f| f.span.first).unwrap_or_default();
    let last = segment.last().map(|f| f.span.last).unwrap_or_default();
    Ok(MemoryFrame {
        field: acc,
        timestamp: last,
        arousal: key.arousal,
        pleasure: key.pleasure,
        compressed: true,
        span: Span { first, last },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    frames: Vec<MemoryFrame>,
    capacity: usize,
    compression_window: usize,
}

impl MemoryStore {
    pub fn new(capacity: usize, compression_window: usize) -> Result<Self, MemoryError> {
        if capacity == 0 || compression_window < 2 {
            return Err(MemoryError::InvalidCapacity);
        }
        Ok(Self {
            frames: Vec::new(),
            capacity,
            compression_window,
        })
    }

    pub fn frames(&self) -> &[MemoryFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn compression_window(&self) -> usize {
        self.compression_window
    }

    /// Appends a frame and compresses the oldest window once over capacity.
    pub fn store_frame<R: Rng + ?Sized>(
        &mut self,
        frame: MemoryFrame,
        cfg: &BlendConfig,
        rng: &mut R,
    ) -> Result<(), MemoryError> {
        if let Some(latest) = self.frames.last() {
            if frame.timestamp <= latest.timestamp {
                return Err(MemoryError::OutOfOrder {
                    latest: latest.timestamp,
                    found: frame.timestamp,
                });
            }
        }
        self.frames.push(frame);
        if self.frames.len() > self.capacity {
            self.compress_oldest(cfg, rng)?;
        }
        Ok(())
    }

    /// Window selection: start at the oldest uncompressed frame; if fewer than
    /// a full window of frames follow it, fall back to the oldest frames overall
    /// (compressed frames included).
    fn compress_oldest<R: Rng + ?Sized>(
        &mut self,
        cfg: &BlendConfig,
        rng: &mut R,
    ) -> Result<(), MemoryError> {
        let window = self.compression_window.min(self.frames.len());
        if window < 2 {
            return Ok(());
        }
        let start = match self.frames.iter().position(|f| !f.compressed) {
            Some(i) if i + window <= self.frames.len() => i,
            _ => 0,
        };
        let compressed = compress_segment(&self.frames[start..start + window], cfg, rng)?;
        self.frames.splice(start..start + window, [compressed]);
        Ok(())
    }

    /// Frame indices ordered by mood-congruent score, best first.
    ///
    /// Score is `field_similarity(frame, pi) * (1 + |arousal|)`; equal scores keep
    /// timestamp order. Frames that cannot be compared (empty) are skipped.
    pub fn rank(&self, pi: &PhenomenalField, cfg: &BlendConfig) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = self
            .frames
            .iter()
            .enumerate()
            .filter_map(|(i, f)| {
                field_similarity(&f.field, pi, cfg)
                    .ok()
                    .map(|s| (i, s * (1.0 + f.arousal.abs())))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
    }

    /// Blends the `k` best-scoring frames, best first. Empty store gives an empty field.
    pub fn activate<R: Rng + ?Sized>(
        &self,
        pi: &PhenomenalField,
        k: usize,
        cfg: &BlendConfig,
        rng: &mut R,
    ) -> Result<PhenomenalField, MemoryError> {
        let mut top = self.rank(pi, cfg).into_iter().take(k);
        let Some((first, _)) = top.next() else {
            return Ok(PhenomenalField::empty());
        };
        let mut acc = self.frames[first].field.clone();
        for (i, _) in top {
            acc = blend(&acc, &self.frames[i].field, cfg, rng)?;
        }
        Ok(acc)
    }

    pub fn snapshot(&self) -> Vec<FrameSummary> {
        self.frames
            .iter()
            .map(|f| FrameSummary {
                timestamp: f.timestamp,
                span: f.span,
                arousal: f.arousal,
                pleasure: f.pleasure,
                compressed: f.compressed,
                rows: f.field.len(),
            })
            .collect()
    }
}

/// Blend of the present observation with what it recalled.
pub fn imagine<R: Rng + ?Sized>(
    pi: &PhenomenalField,
    activated: &PhenomenalField,
    cfg: &BlendConfig,
    rng: &mut R,
) -> Result<PhenomenalField, MemoryError> {
    Ok(blend(pi, activated, cfg, rng)?)
}

/// Contents of the consciousness channel at one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsciousnessChannel {
    /// Oldest first.
    pub retention: VecDeque<PhenomenalField>,
    pub primal_impression: PhenomenalField,
    pub activated_memory: PhenomenalField,
    pub imagination: PhenomenalField,
    pub protention: PhenomenalField,
}

impl ConsciousnessChannel {
    /// Pushes a field into retention, dropping the oldest beyond `window`.
    pub fn retain(&mut self, field: PhenomenalField, window: usize) {
        self.retention.push_back(field);
        while self.retention.len() > window {
            self.retention.pop_front();
        }
    }

    pub fn retention_slice(&self) -> Vec<PhenomenalField> {
        self.retention.iter().cloned().collect()
    }
}

/// Forecasts the next field from the channel, an imagination and the driver.
pub trait ProtentionPredictor: Send + Sync {
    fn predict(
        &self,
        channel: &ConsciousnessChannel,
        imagination: &PhenomenalField,
        driver: f64,
    ) -> Result<PhenomenalField, MemoryError>;
}

/// Default predictor: rows of the imagination that match a row of the newest
/// retained field are moved one step along that row's drift since the
/// previous retained field. Embeddings are kept. The driver is ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct PersistenceDrift {
    pub cfg: BlendConfig,
}

impl PersistenceDrift {
    pub fn new(cfg: BlendConfig) -> Self {
        Self { cfg }
    }

    fn best_match(
        &self,
        row: &crate::field::FieldRow,
        field: &PhenomenalField,
    ) -> Result<Option<usize>, FieldError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, other) in field.rows().iter().enumerate() {
            let s = row_similarity(row, other, &self.cfg)?;
            if s < self.cfg.similarity_threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        Ok(best.map(|(i, _)| i))
    }
}

impl ProtentionPredictor for PersistenceDrift {
    fn predict(
        &self,
        channel: &ConsciousnessChannel,
        imagination: &PhenomenalField,
        _driver: f64,
    ) -> Result<PhenomenalField, MemoryError> {
        let n = channel.retention.len();
        if n < 2 {
            return Ok(imagination.clone());
        }
        let previous = &channel.retention[n - 2];
        let latest = &channel.retention[n - 1];

        // Drift of each latest row relative to its best partner in the previous field.
        let mut drifts = Vec::with_capacity(latest.len());
        for row in latest.rows() {
            let drift = self.best_match(row, previous)?.map(|j| {
                let (p, q) = (previous.rows()[j].position(), row.position());
                (q.theta - p.theta, circular_delta(p.phi, q.phi), q.gamma - p.gamma)
            });
            drifts.push(drift);
        }

        let mut rows = Vec::with_capacity(imagination.len());
        for row in imagination.rows() {
            let moved = match self.best_match(row, latest)?.and_then(|i| drifts[i]) {
                Some((dt, dp, dg)) => {
                    let p = row.position();
                    row.with_position(Position::normalized(
                        p.theta + dt,
                        p.phi + dp,
                        p.gamma + dg,
                    ))
                }
                None => row.clone(),
            };
            rows.push(moved);
        }
        Ok(PhenomenalField::new(rows)?)
    }
}

/// Protention of the channel's current imagination.
pub fn protend(
    channel: &ConsciousnessChannel,
    driver: f64,
    predictor: &dyn ProtentionPredictor,
) -> Result<PhenomenalField, MemoryError> {
    predictor.predict(channel, &channel.imagination, driver)
}
