use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    prompt_hash, seeded_digest, seeded_hash, Backend, BackendError, GenerateRequest, RankRequest,
    Role, ScoreRequest,
};

/// Deterministic stand-in for every backend role.
///
/// - embed: seeded hash of the text drives a Gaussian draw, normalized to unit length
/// - score: `1 + hash(prompt) mod 5`
/// - rank: balance descending, then id ascending
/// - generate: the first offered action with the thought `I will {action}.`
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    dimension: usize,
}

impl MockBackend {
    pub fn new(seed: u64, dimension: usize) -> Self {
        Self { seed, dimension }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Backend for MockBackend {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        if text.is_empty() {
            return Err(BackendError::EmptyText);
        }
        let mut rng = ChaCha8Rng::from_seed(seeded_digest(self.seed, "embed", text));
        let mut v: Vec<f64> = (0..self.dimension)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        Ok(v)
    }

    fn score(&self, request: &ScoreRequest) -> Result<String, BackendError> {
        let score = 1 + seeded_hash(self.seed, "score", &request.prompt) % 5;
        Ok(score.to_string())
    }

    fn rank(&self, request: &RankRequest) -> Result<String, BackendError> {
        let mut entries: Vec<_> = request.entries.iter().collect();
        entries.sort_by(|a, b| b.balance.cmp(&a.balance).then_with(|| a.agent.cmp(&b.agent)));
        Ok(entries
            .iter()
            .map(|e| e.agent.as_str())
            .collect::<Vec<_>>()
            .join(", "))
    }

    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        let action = request
            .actions
            .first()
            .ok_or_else(|| BackendError::InvalidReply {
                role: Role::Generator,
                prompt_hash: prompt_hash(&request.prompt),
                message: "no actions offered".into(),
            })?;
        Ok(format!("Thought: I will {action}.\nAction: {action}"))
    }
}
