//! JSON HTTP API over in-memory sessions, optionally mirrored to a directory.
//!
//! Errors are returned as `{"error": <code>, "message": <text>}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

use psibayes_core::bayes::GaussianPrior;
use psibayes_core::placement::{PlacementPolicy, StoppingRule};
use psibayes_core::psychometric::Design;

use crate::autopilot::{autopilot, AutopilotOutcome, AutopilotRequest};
use crate::diagnostics::{diagnostics, prior_preview, Diagnostics, DiagnosticsOptions, PreviewRequest, PriorPreview};
use crate::error::SessionError;
use crate::estimate::{EstimateOptions, EstimateReport};
use crate::persist;
use crate::state::{NextOutcome, RespondOutcome, SessionConfig, SessionEvent, SessionState, StopReason};

/// Trial cap used when a create request names no stopping rule.
pub const DEFAULT_MAX_TRIALS: usize = 100;

type Shared = Arc<Mutex<SessionState>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Shared>>>,
    data_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sessions are saved to `dir/<id>.json` after every change; existing
    /// files there are loaded.
    pub fn with_data_dir(dir: &Path) -> Result<Self, SessionError> {
        std::fs::create_dir_all(dir)?;
        let mut map = HashMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            match persist::load(&path) {
                Ok(st) => {
                    map.insert(st.id.clone(), Arc::new(Mutex::new(st)));
                }
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(Self { sessions: Arc::new(RwLock::new(map)), data_dir: Some(dir.to_path_buf()) })
    }

    async fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| SessionError::NotFound(id.to_string()).into())
    }

    fn persist(&self, st: &SessionState) -> Result<(), SessionError> {
        match &self.data_dir {
            Some(dir) => persist::save(st, &dir.join(format!("{}.json", st.id))),
            None => Ok(()),
        }
    }
}

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self(e)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

fn status_of(e: &SessionError) -> (StatusCode, &'static str) {
    use psibayes_core::Error as C;
    match e {
        SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
        SessionError::AlreadyPending => (StatusCode::CONFLICT, "already_pending"),
        SessionError::NoPendingStimulus => (StatusCode::CONFLICT, "no_pending_stimulus"),
        SessionError::SessionStopped => (StatusCode::CONFLICT, "session_stopped"),
        SessionError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
        SessionError::Core(C::Domain(_) | C::InvalidArgument(_) | C::OutOfRange { .. }) => {
            (StatusCode::UNPROCESSABLE_ENTITY, "invalid")
        }
        SessionError::Core(_) => (StatusCode::INTERNAL_SERVER_ERROR, "numerical"),
        SessionError::SchemaVersionMismatch { .. } | SessionError::CorruptFile(_) | SessionError::ReplayMismatch(_) => {
            (StatusCode::INTERNAL_SERVER_ERROR, "storage")
        }
        SessionError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = status_of(&self.0);
        (status, Json(ErrorBody { error: code.into(), message: self.0.to_string() })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(v)| v).map_err(|e| ApiError(SessionError::Invalid(e.body_text())))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError(SessionError::Invalid(e.body_text())))
}

/// Runs `f` on the locked session off the async workers, saving afterwards if `save`.
async fn with_session<T, F>(app: &AppState, id: &str, save: bool, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut SessionState) -> Result<T, SessionError> + Send + 'static,
{
    let shared = app.get(id).await?;
    let mut guard = shared.lock_owned().await;
    let app = app.clone();
    tokio::task::spawn_blocking(move || {
        let out = f(&mut guard)?;
        if save {
            app.persist(&guard)?;
        }
        Ok(out)
    })
    .await
    .map_err(|e| ApiError(SessionError::Io(std::io::Error::other(e.to_string()))))?
    .map_err(ApiError)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateRequest {
    pub design: Design,
    pub prior: GaussianPrior,
    /// Defaults to the psi policy over the design domain.
    #[serde(default)]
    pub policy: Option<PlacementPolicy>,
    /// Defaults to a fixed count of [`DEFAULT_MAX_TRIALS`].
    #[serde(default)]
    pub stopping_rule: Option<StoppingRule>,
    #[serde(default)]
    pub seed: u64,
}

impl CreateRequest {
    pub fn into_config(self) -> SessionConfig {
        SessionConfig {
            policy: self.policy.unwrap_or_else(|| PlacementPolicy::psi(&self.design)),
            stopping_rule: self.stopping_rule.unwrap_or(StoppingRule::FixedTrials { count: DEFAULT_MAX_TRIALS }),
            design: self.design,
            prior: self.prior,
            seed: self.seed,
        }
    }
}

/// Compact view returned by list, create and get.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub trials: usize,
    pub pending_stimulus: Option<f64>,
    pub stopped: Option<StopReason>,
    pub mode: [f64; 3],
    pub sd: [f64; 3],
    pub digest: String,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

impl SessionSummary {
    pub fn of(st: &SessionState) -> Self {
        Self {
            id: st.id.clone(),
            trials: st.trial_count(),
            pending_stimulus: st.pending_stimulus,
            stopped: st.stopped,
            mode: st.cached_posterior.mode.to_array(),
            sd: st.cached_posterior.sd(),
            digest: st.digest(),
            created_at_ms: st.created_at_ms,
            updated_at_ms: st.updated_at_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProposeRequest {
    pub x: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RespondRequest {
    pub response: bool,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EstimateQuery {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct DiagnosticsQuery {
    pub seed: Option<u64>,
    pub draws: Option<usize>,
}

async fn create(
    State(app): State<AppState>,
    req: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionSummary>), ApiError> {
    let req = body(req)?;
    let st = SessionState::create(req.into_config())?;
    app.persist(&st)?;
    let summary = SessionSummary::of(&st);
    app.sessions.write().await.insert(st.id.clone(), Arc::new(Mutex::new(st)));
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list(State(app): State<AppState>) -> Json<Vec<SessionSummary>> {
    let all: Vec<Shared> = app.sessions.read().await.values().cloned().collect();
    let mut out = Vec::with_capacity(all.len());
    for s in all {
        out.push(SessionSummary::of(&*s.lock().await));
    }
    out.sort_by(|a, b| (a.created_at_ms, &a.id).cmp(&(b.created_at_ms, &b.id)));
    Json(out)
}

async fn show(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionSummary> {
    let s = app.get(&id).await?;
    let st = s.lock().await;
    Ok(Json(SessionSummary::of(&st)))
}

async fn events(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Vec<SessionEvent>> {
    let s = app.get(&id).await?;
    let st = s.lock().await;
    Ok(Json(st.events.clone()))
}

async fn next(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<NextOutcome> {
    with_session(&app, &id, true, |st| st.next()).await.map(Json)
}

async fn propose(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    req: Result<Json<ProposeRequest>, JsonRejection>,
) -> ApiResult<SessionSummary> {
    let req = body(req)?;
    with_session(&app, &id, true, move |st| {
        st.propose_at(req.x)?;
        Ok(SessionSummary::of(st))
    })
    .await
    .map(Json)
}

async fn respond(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    req: Result<Json<RespondRequest>, JsonRejection>,
) -> ApiResult<RespondOutcome> {
    let req = body(req)?;
    with_session(&app, &id, true, move |st| st.respond(req.response)).await.map(Json)
}

async fn stop(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionSummary> {
    with_session(&app, &id, true, |st| {
        st.stop()?;
        Ok(SessionSummary::of(st))
    })
    .await
    .map(Json)
}

async fn simulate(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    req: Result<Json<AutopilotRequest>, JsonRejection>,
) -> ApiResult<AutopilotOutcome> {
    let req = body(req)?;
    with_session(&app, &id, true, move |st| autopilot(st, &req)).await.map(Json)
}

async fn estimate(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<EstimateQuery>, QueryRejection>,
) -> ApiResult<EstimateReport> {
    let q = query(q)?;
    let d = EstimateOptions::default();
    let opts = EstimateOptions {
        seed: q.seed,
        samples: q.samples.unwrap_or(d.samples),
        level: q.level.unwrap_or(d.level),
        ..d
    };
    with_session(&app, &id, false, move |st| st.estimate(&opts)).await.map(Json)
}

async fn diagnose(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<DiagnosticsQuery>, QueryRejection>,
) -> ApiResult<Diagnostics> {
    let q = query(q)?;
    let d = DiagnosticsOptions::default();
    let opts = DiagnosticsOptions { seed: q.seed, draws: q.draws.unwrap_or(d.draws), ..d };
    with_session(&app, &id, false, move |st| diagnostics(st, &opts)).await.map(Json)
}

async fn preview(req: Result<Json<PreviewRequest>, JsonRejection>) -> ApiResult<PriorPreview> {
    let req = body(req)?;
    tokio::task::spawn_blocking(move || prior_preview(&req))
        .await
        .map_err(|e| ApiError(SessionError::Io(std::io::Error::other(e.to_string()))))?
        .map(Json)
        .map_err(ApiError)
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/next", post(next))
        .route("/sessions/{id}/propose", post(propose))
        .route("/sessions/{id}/respond", post(respond))
        .route("/sessions/{id}/stop", post(stop))
        .route("/sessions/{id}/simulate", post(simulate))
        .route("/sessions/{id}/estimate", get(estimate))
        .route("/sessions/{id}/diagnostics", get(diagnose))
        .route("/priors/preview", post(preview))
        .with_state(app)
}

/// Serves the API until Ctrl-C.
pub async fn serve(addr: SocketAddr, data_dir: Option<&Path>) -> Result<(), SessionError> {
    let app = match data_dir {
        Some(d) => AppState::with_data_dir(d)?,
        None => AppState::new(),
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
