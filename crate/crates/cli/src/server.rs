//! HTTP front end for interactive sessions. Each session has its own lock,
//! so commands to one session run strictly in order while different
//! sessions proceed in parallel. State changes are broadcast as
//! server-sent events; slow listeners only see the latest state.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use alr_core::controller::{start_session, AlrConfig, AlrSession, SessionSnapshot, SessionStatus};
use alr_core::error::AlrError;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use tokio::sync::{watch, Mutex};

struct Slot {
    session: Arc<Mutex<AlrSession>>,
    tx: watch::Sender<SessionSnapshot>,
}

struct Inner {
    base: Option<AlrConfig>,
    next_id: AtomicU64,
    sessions: RwLock<HashMap<u64, Arc<Slot>>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// `base` is used for `POST /sessions` requests without a body.
    pub fn new(base: Option<AlrConfig>) -> Self {
        Self { inner: Arc::new(Inner { base, next_id: AtomicU64::new(1), sessions: RwLock::new(HashMap::new()) }) }
    }

    fn slot(&self, id: u64) -> Result<Arc<Slot>, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("session table poisoned")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl From<AlrError> for ApiError {
    fn from(e: AlrError) -> Self {
        let code = match &e {
            AlrError::NotRunning(_) => StatusCode::CONFLICT,
            AlrError::InvalidValue(_) | AlrError::Json(_) | AlrError::UnknownPreset(_) => StatusCode::BAD_REQUEST,
            AlrError::RankDeficient(_) | AlrError::DegenerateGeometry(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: u64,
    pub state: SessionSnapshot,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualStep {
    pub dr: f64,
    pub dtheta: f64,
    pub dphi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManualReply {
    pub state: SessionSnapshot,
    pub clamped: bool,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/manual", post(manual))
        .route("/sessions/{id}/auto", post(auto))
        .route("/sessions/{id}/run", post(run))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/ball.png", get(ball_png))
        .with_state(state)
}

/// Runs `f` on the session off the async workers, holding the session lock.
async fn with_session<T, F>(slot: &Arc<Slot>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut AlrSession) -> Result<T, AlrError> + Send + 'static,
{
    let guard = slot.session.clone().lock_owned().await;
    let tx = slot.tx.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        let out = f(&mut guard);
        tx.send_replace(guard.snapshot());
        out
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(ApiError::from)
}

async fn create(State(app): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let config = if body.iter().all(u8::is_ascii_whitespace) {
        app.inner.base.clone().ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "request body must hold a session config".into()))?
    } else {
        serde_json::from_slice::<AlrConfig>(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?
    };
    let session = tokio::task::spawn_blocking(move || start_session(&config))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let snapshot = session.snapshot();
    let (tx, _) = watch::channel(snapshot.clone());
    let id = app.inner.next_id.fetch_add(1, Ordering::Relaxed);
    let slot = Arc::new(Slot { session: Arc::new(Mutex::new(session)), tx });
    app.inner.sessions.write().expect("session table poisoned").insert(id, slot);
    log::info!("session {id} created");
    Ok((StatusCode::CREATED, Json(Created { id, state: snapshot })))
}

async fn get_state(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Json<SessionSnapshot>, ApiError> {
    let slot = app.slot(id)?;
    let snapshot = slot.session.lock().await.snapshot();
    Ok(Json(snapshot))
}

async fn manual(State(app): State<AppState>, Path(id): Path<u64>, Json(step): Json<ManualStep>) -> Result<Json<ManualReply>, ApiError> {
    let slot = app.slot(id)?;
    let (state, outcome) = with_session(&slot, move |s| s.step_manual([step.dr, step.dtheta, step.dphi])).await?;
    Ok(Json(ManualReply { state, clamped: outcome.clamped }))
}

async fn auto(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Json<SessionSnapshot>, ApiError> {
    let slot = app.slot(id)?;
    Ok(Json(with_session(&slot, |s| s.step_auto()).await?))
}

async fn run(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let slot = app.slot(id)?;
    let report = with_session(&slot, |s| {
        if s.status() != SessionStatus::Running {
            return Err(AlrError::NotRunning(s.status().name().into()));
        }
        s.run_to_termination()
    })
    .await?;
    Ok(Json(report).into_response())
}

async fn ball_png(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let slot = app.slot(id)?;
    let png = with_session(&slot, |s| s.ball_png()).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Current state first, then every change; the stream ends after the first
/// terminal state.
fn snapshot_stream(rx: watch::Receiver<SessionSnapshot>) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold((rx, true, false), |(mut rx, first, done)| async move {
        if done || (!first && rx.changed().await.is_err()) {
            return None;
        }
        let snapshot = rx.borrow_and_update().clone();
        let finished = snapshot.status != SessionStatus::Running;
        let event =
            Event::default().event("state").json_data(&snapshot).unwrap_or_else(|e| Event::default().event("error").data(e.to_string()));
        Some((Ok(event), (rx, false, finished)))
    })
}

async fn events(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let slot = app.slot(id)?;
    Ok(Sse::new(snapshot_stream(slot.tx.subscribe())).keep_alive(KeepAlive::default()))
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
