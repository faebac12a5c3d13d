//! HTTP service hosting live annotation sessions.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create; simulated sessions train iteration 0 before answering |
//! | GET | `/sessions/{id}` | summary and status |
//! | GET | `/sessions/{id}/batch` | the open batch, acquiring one if none is open |
//! | POST | `/sessions/{id}/cells/{table}/{row}/{col}/labels` | `{"spans": [...]}`; `row` is an index or `header` |
//! | POST | `/sessions/{id}/train?force=bool&wait=bool` | retrain on the labeled pool |
//! | GET | `/sessions/{id}/curve` | learning curve of the session |
//! | GET | `/healthz` | liveness |
//!
//! Requests against one session are serialized by its lock. Training runs on
//! the blocking pool without the lock held; its status is visible through the
//! summary.

pub mod error;
pub mod session;
pub mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tabal_core::table::Span;
use tokio::net::TcpListener;
use tokio::sync::{Mutex, RwLock};

pub use error::{ApiError, ApiResult};
pub use session::{CreateSession, OracleMode, Session, SessionSummary, Status};
pub use store::Store;

type SessionHandle = Arc<Mutex<Session>>;

/// Shared state of the service: live sessions and their store.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, SessionHandle>>>,
    store: Store,
}

impl AppState {
    /// Open the data directory and reload every persisted session.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, String> {
        let store = Store::new(data_dir)?;
        let sessions: HashMap<_, _> = store
            .load_all()
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(Mutex::new(s))))
            .collect();
        log::info!("loaded {} sessions", sessions.len());
        Ok(AppState {
            sessions: Arc::new(RwLock::new(sessions)),
            store,
        })
    }

    async fn session(&self, id: &str) -> ApiResult<SessionHandle> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
    }

    fn save(&self, session: &Session) -> ApiResult<()> {
        self.store.save(session).map_err(|e| {
            log::error!("session {}: could not persist state: {e}", session.id);
            ApiError::internal(format!("could not persist session state: {e}"))
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/batch", get(get_batch))
        .route("/sessions/{id}/cells/{table}/{row}/{col}/labels", post(submit_labels))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/curve", get(get_curve))
        .with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

fn new_id() -> String {
    format!("{:016x}", rand::random::<u64>())
}

async fn create_session(State(state): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<Response> {
    let id = new_id();
    let simulated = req.oracle == OracleMode::Simulated;
    let session = tokio::task::spawn_blocking(move || Session::create(id, req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    state.store.create(&session).map_err(ApiError::internal)?;
    let id = session.id.clone();
    let handle = Arc::new(Mutex::new(session));
    state.sessions.write().await.insert(id.clone(), Arc::clone(&handle));
    log::info!("created session {id}");
    if simulated {
        run_training(&state, &handle, false).await?;
    }
    let summary = handle.lock().await.summary();
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let handle = state.session(&id).await?;
    let summary = handle.lock().await.summary();
    Ok(Json(summary))
}

async fn get_batch(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let handle = state.session(&id).await?;
    let mut session = handle.lock().await;
    if let Some(job) = session.begin_acquire()? {
        let selection = tokio::task::spawn_blocking(move || job.execute())
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let opened = session.open_batch(selection);
        state.save(&session)?;
        opened?;
    }
    Ok(Json(session.payload()?).into_response())
}

#[derive(Deserialize)]
struct LabelBody {
    spans: Vec<Span>,
}

async fn submit_labels(
    State(state): State<AppState>,
    Path((id, table, row, col)): Path<(String, String, String, usize)>,
    Json(body): Json<LabelBody>,
) -> ApiResult<Response> {
    let cell = session::parse_cell(&table, &row, col)?;
    let handle = state.session(&id).await?;
    let mut session = handle.lock().await;
    let ack = session.submit(&cell, &body.spans)?;
    state.save(&session)?;
    Ok(Json(ack).into_response())
}

#[derive(Deserialize)]
struct TrainQuery {
    #[serde(default)]
    force: bool,
    #[serde(default)]
    wait: bool,
}

async fn train(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<TrainQuery>) -> ApiResult<Response> {
    let handle = state.session(&id).await?;
    if q.wait {
        run_training(&state, &handle, q.force).await?;
        let session = handle.lock().await;
        let record = session.run.records.last().cloned();
        return Ok(Json(record).into_response());
    }
    let job = handle.lock().await.begin_training(q.force)?;
    let summary = handle.lock().await.summary();
    let state = state.clone();
    tokio::spawn(async move {
        let outcome = execute(job).await;
        finish(&state, &handle, outcome).await.ok();
    });
    Ok((StatusCode::ACCEPTED, Json(summary)).into_response())
}

async fn execute(job: session::TrainJob) -> Result<tabal_core::experiment::Run, String> {
    match tokio::task::spawn_blocking(move || job.execute()).await {
        Ok(Ok(run)) => Ok(run),
        Ok(Err(e)) => Err(e.to_string()),
        Err(e) => Err(format!("training task failed: {e}")),
    }
}

async fn finish(
    state: &AppState,
    handle: &SessionHandle,
    outcome: Result<tabal_core::experiment::Run, String>,
) -> ApiResult<()> {
    let mut session = handle.lock().await;
    let failed = outcome.as_ref().err().cloned();
    session.finish_training(outcome);
    state.save(&session)?;
    match failed {
        Some(message) => Err(ApiError::internal(message)),
        None => Ok(()),
    }
}

async fn run_training(state: &AppState, handle: &SessionHandle, force: bool) -> ApiResult<()> {
    let job = handle.lock().await.begin_training(force)?;
    let outcome = execute(job).await;
    finish(state, handle, outcome).await
}

async fn get_curve(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let handle = state.session(&id).await?;
    let session = handle.lock().await;
    if session.run.records.is_empty() {
        return Err(ApiError::conflict("no training round has completed yet"));
    }
    Ok(Json(session.curve()?).into_response())
}
