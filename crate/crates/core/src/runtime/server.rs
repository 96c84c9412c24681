//! JSON control server over one simulation.
//!
//! Every request locks the simulation for its whole duration, so mutations
//! never interleave. Each response carries the revision counter observed
//! under that lock.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{RuntimeError, Simulation, StepRecord};
use crate::world::{WorldError, WorldState};

pub type SharedSimulation = Arc<Mutex<Simulation>>;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        let status = match &e {
            RuntimeError::World(WorldError::UnknownAgent(_)) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl From<WorldError> for ApiError {
    fn from(e: WorldError) -> Self {
        RuntimeError::World(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserveResponse {
    pub observation: String,
    pub action_space: Vec<String>,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActRequest {
    pub agent: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActResponse {
    pub outcome: String,
    pub observation: String,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub revision: u64,
    pub completed_steps: u64,
    pub world: WorldState,
    pub resources: std::collections::BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub step: u64,
    pub records: Vec<StepRecord>,
    pub revision: u64,
}

/// Runs `f` on a blocking thread with the simulation locked.
async fn with_sim<T, F>(sim: SharedSimulation, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Simulation) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut guard = sim.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("request task failed: {e}"),
    })?
}

async fn observe(State(sim): State<SharedSimulation>, Path(agent): Path<String>) -> Result<Json<ObserveResponse>, ApiError> {
    with_sim(sim, move |s| {
        let (observation, action_space) = s.observe(&agent)?;
        Ok(Json(ObserveResponse {
            observation,
            action_space,
            revision: s.revision(),
        }))
    })
    .await
}

async fn act(State(sim): State<SharedSimulation>, body: Bytes) -> Result<Json<ActResponse>, ApiError> {
    let value: Value =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed act request: {e}")))?;
    if !value.is_object() {
        return Err(ApiError::bad_request("act request must be a JSON object"));
    }
    let req: ActRequest =
        serde_json::from_value(value).map_err(|e| ApiError::bad_request(format!("malformed act request: {e}")))?;
    with_sim(sim, move |s| {
        let outcome = s.act(&req.agent, &req.action)?;
        let (observation, _) = s.observe(&req.agent)?;
        Ok(Json(ActResponse {
            outcome: outcome.to_string(),
            observation,
            revision: s.revision(),
        }))
    })
    .await
}

async fn state(State(sim): State<SharedSimulation>) -> Result<Json<StateResponse>, ApiError> {
    with_sim(sim, |s| {
        Ok(Json(StateResponse {
            revision: s.revision(),
            completed_steps: s.completed_steps(),
            world: s.world().clone(),
            resources: s.ledger().balances().clone(),
        }))
    })
    .await
}

async fn metrics(State(sim): State<SharedSimulation>) -> Result<Json<Value>, ApiError> {
    with_sim(sim, |s| {
        serde_json::to_value(s.metrics())
            .map(Json)
            .map_err(|e| ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: e.to_string(),
            })
    })
    .await
}

async fn step(State(sim): State<SharedSimulation>) -> Result<Json<StepResponse>, ApiError> {
    with_sim(sim, |s| {
        let records = s.step()?;
        Ok(Json(StepResponse {
            step: s.completed_steps(),
            records,
            revision: s.revision(),
        }))
    })
    .await
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        message: "no such endpoint".into(),
    }
}

pub fn router(sim: SharedSimulation) -> Router {
    Router::new()
        .route("/observe/{agent}", get(observe))
        .route("/act", post(act))
        .route("/state", get(state))
        .route("/metrics", get(metrics))
        .route("/step", post(step))
        .fallback(not_found)
        .with_state(sim)
}

/// Binds `addr` and serves until the listener fails.
pub async fn serve(sim: Simulation, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_listener(Arc::new(Mutex::new(sim)), listener).await
}

pub async fn serve_listener(sim: SharedSimulation, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(sim)).await
}
