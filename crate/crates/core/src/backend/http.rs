use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    prompt_hash, Backend, BackendConfig, BackendError, GenerateRequest, MockBackend, RankRequest,
    Role, RoleModels, ScoreRequest, API_KEY_ENV,
};

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Debug, Deserialize)]
struct EmbedReply {
    embedding: Vec<f64>,
}

/// Generic chat-completions client.
///
/// Requests are `{model, messages: [{role, content}]}`; replies are read from a
/// top-level `content` string, or from `choices[0].message.content` when the
/// server speaks the OpenAI shape.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    embed_endpoint: Option<String>,
    api_key: Option<String>,
    models: RoleModels,
    max_retries: u32,
    max_concurrency: usize,
    dimension: usize,
    local_embedder: MockBackend,
}

impl HttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint
            .clone()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| BackendError::Config("http mode requires an endpoint".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            embed_endpoint: config.embed_endpoint.clone(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            models: config.models.clone(),
            max_retries: config.max_retries,
            max_concurrency: config.max_concurrency.max(1),
            dimension: config.embedding_dimension,
            local_embedder: MockBackend::new(config.seed.unwrap_or_default(), config.embedding_dimension),
        })
    }

    fn post(&self, url: &str, role: Role, prompt: &str, body: &impl Serialize) -> Result<Value, BackendError> {
        let transport = |message: String| BackendError::Transport {
            role,
            prompt_hash: prompt_hash(prompt),
            message,
        };
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            let mut req = self.client.post(url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<Value>().map_err(|e| transport(e.to_string()));
                }
                Ok(resp) if resp.status().is_client_error() => {
                    return Err(transport(format!("HTTP {}", resp.status())));
                }
                Ok(resp) => last = format!("HTTP {}", resp.status()),
                Err(e) => last = e.to_string(),
            }
            tracing::warn!(%role, attempt, error = %last, "backend request failed");
        }
        Err(transport(last))
    }

    fn chat(&self, role: Role, prompt: &str) -> Result<String, BackendError> {
        let body = ChatRequest {
            model: self.models.for_role(role),
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let reply = self.post(&self.endpoint, role, prompt, &body)?;
        extract_content(&reply).ok_or_else(|| BackendError::InvalidReply {
            role,
            prompt_hash: prompt_hash(prompt),
            message: "reply has no content field".into(),
        })
    }
}

fn extract_content(reply: &Value) -> Option<String> {
    if let Some(s) = reply.get("content").and_then(Value::as_str) {
        return Some(s.to_string());
    }
    reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl Backend for HttpBackend {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let Some(url) = &self.embed_endpoint else {
            return self.local_embedder.embed(text);
        };
        if text.is_empty() {
            return Err(BackendError::EmptyText);
        }
        let body = EmbedRequest {
            model: &self.models.embedder,
            input: text,
        };
        let reply = self.post(url, Role::Embedder, text, &body)?;
        let parsed: EmbedReply =
            serde_json::from_value(reply).map_err(|e| BackendError::InvalidReply {
                role: Role::Embedder,
                prompt_hash: prompt_hash(text),
                message: e.to_string(),
            })?;
        if parsed.embedding.len() != self.dimension {
            return Err(BackendError::InvalidReply {
                role: Role::Embedder,
                prompt_hash: prompt_hash(text),
                message: format!(
                    "embedding has {} components, expected {}",
                    parsed.embedding.len(),
                    self.dimension
                ),
            });
        }
        Ok(parsed.embedding)
    }

    fn score(&self, request: &ScoreRequest) -> Result<String, BackendError> {
        self.chat(Role::Scorer, &request.prompt)
    }

    fn rank(&self, request: &RankRequest) -> Result<String, BackendError> {
        self.chat(Role::Ranker, &request.prompt)
    }

    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        self.chat(Role::Generator, &request.prompt)
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }
}
