//! HTTP front end for persuasive teachable agent sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{scenario, seed?}` | `{id, view}` |
//! | GET | `/sessions/{id}` | | view |
//! | POST | `/sessions/{id}/actions` | `{type, ..., elapsed_ms?}` | view |
//! | GET | `/sessions/{id}/log?format=jsonl\|csv` | | log document |
//! | GET | `/scenarios` | | scenario names |
//!
//! Errors are `{code, message}` with 404 for unknown sessions or scenarios,
//! 409 for illegal actions and 410 once a session is completed.

mod error;
mod store;

pub use error::{ErrorBody, ServiceError};
pub use store::{Session, SessionStore, StoreConfig, DEFAULT_SESSION_TTL};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use pta_core::play::{ClientView, LearnerAction};
use pta_core::scenario::{reference_scenario, Scenario};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub scenario: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub view: ClientView,
}

/// A learner action plus an optional logical-time step overriding the wall
/// clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionRequest {
    #[serde(flatten)]
    pub action: LearnerAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, Deserialize)]
struct LogQuery {
    #[serde(default)]
    format: Option<String>,
}

/// Scenario registry holding only the bundled reference scenario.
pub fn reference_scenarios() -> BTreeMap<String, Arc<Scenario>> {
    let sc = reference_scenario();
    BTreeMap::from([(sc.meta.name.clone(), Arc::new(sc))])
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(post_action))
        .route("/sessions/{id}/log", get(get_log))
        .with_state(store)
}

async fn list_scenarios(State(store): State<Arc<SessionStore>>) -> Json<Vec<String>> {
    Json(store.scenario_names())
}

async fn create_session(
    State(store): State<Arc<SessionStore>>,
    body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ServiceError> {
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let (id, view) = store.create(&req.scenario, req.seed)?;
    Ok((StatusCode::CREATED, Json(Created { id, view })))
}

async fn get_session(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> Result<Json<ClientView>, ServiceError> {
    store.view(&id).await.map(Json)
}

async fn post_action(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<ClientView>, ServiceError> {
    // Unknown sessions take precedence over malformed bodies.
    store.get(&id)?;
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    store.act(&id, req.action, req.elapsed_ms).await.map(Json)
}

async fn get_log(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    Query(q): Query<LogQuery>,
) -> Result<impl IntoResponse, ServiceError> {
    let format = match q.format.as_deref() {
        None | Some("jsonl") => LogFormat::Jsonl,
        Some("csv") => LogFormat::Csv,
        Some(other) => return Err(ServiceError::BadRequest(format!("unknown log format `{other}`"))),
    };
    let csv = matches!(format, LogFormat::Csv);
    let doc = store.export(&id, csv).await?;
    let mime = if csv { "text/csv" } else { "application/x-ndjson" };
    Ok(([(header::CONTENT_TYPE, mime)], doc))
}

/// Binds `addr` and serves until the process is stopped. Expired sessions
/// are swept once a minute.
pub async fn serve(store: Arc<SessionStore>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let sweeper = store.clone();
    tokio::spawn(async move {
        let mut every = tokio::time::interval(std::time::Duration::from_secs(60));
        loop {
            every.tick().await;
            let n = sweeper.sweep();
            if n > 0 {
                tracing::info!("expired {n} sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store)).await
}
