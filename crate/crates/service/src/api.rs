//! HTTP API over the session store. Long-running work is accepted with 202
//! and observed by polling the session status.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use meshforge_core::asset::AssetBundle;
use meshforge_core::sketch::parse_sketch;

use crate::config::{ServiceConfig, MAX_CANDIDATES};
use crate::gateway::{Gateway, TOKEN_HEADER};
use crate::pipeline::{Pipeline, PipelineSettings};
use crate::session::{GenerationParams, SessionError, SessionRecord, SessionState};
use crate::store::{SessionHandle, SessionStore};

const MAX_BODY_BYTES: usize = 32 << 20;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::IllegalTransition { .. } => Self::new(StatusCode::CONFLICT, e.to_string()),
            SessionError::NoSuchCandidate { .. } => Self::not_found(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorJson { error: &self.message })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Shared state behind every handler.
pub struct AppState {
    pub store: SessionStore,
    pub pipeline: Pipeline,
    pub default_candidates: u32,
    pub token: Option<String>,
}

impl AppState {
    pub fn from_config(cfg: &ServiceConfig) -> anyhow::Result<Arc<Self>> {
        cfg.validate()?;
        let gateway = Arc::new(Gateway::from_config(cfg)?);
        Ok(Arc::new(Self {
            store: SessionStore::open(cfg.persistence_dir.clone(), cfg.session_ttl())?,
            pipeline: Pipeline::new(gateway, PipelineSettings::from(cfg)),
            default_candidates: cfg.candidates,
            token: cfg.shared_token.clone(),
        }))
    }

    fn session(&self, id: &str) -> ApiResult<SessionHandle> {
        self.store
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
    }

    fn persist(&self, record: &SessionRecord) {
        if let Err(e) = self.store.persist(record) {
            tracing::error!(session = record.id(), "persisting session failed: {e}");
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_status))
        .route("/v1/sessions/{id}/sketch", put(put_sketch))
        .route("/v1/sessions/{id}/generate", post(generate))
        .route("/v1/sessions/{id}/candidates/{k}", get(candidate_png))
        .route("/v1/sessions/{id}/select", post(select))
        .route("/v1/sessions/{id}/asset/manifest", get(asset_manifest))
        .route("/v1/sessions/{id}/asset/mesh.obj", get(asset_obj))
        .route("/v1/sessions/{id}/asset/material.mtl", get(asset_mtl))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Periodically evicts idle sessions until the runtime shuts down.
pub fn spawn_eviction(state: Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let period = (state.store.ttl() / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let evicted = state.store.evict_idle();
            if !evicted.is_empty() {
                tracing::info!("evicted {} idle session(s)", evicted.len());
            }
        }
    })
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = req.headers().get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong token").into_response();
        }
    }
    next.run(req).await
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("invalid body: {e}")))
}

#[derive(Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>) -> ApiResult<impl IntoResponse> {
    let (session_id, _) = state.store.create().map_err(ApiError::internal)?;
    Ok((StatusCode::CREATED, Json(CreatedSession { session_id })))
}

async fn session_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let handle = state.session(&id)?;
    let record = handle.lock().await;
    Ok(Json(record.status()))
}

async fn put_sketch(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let handle = state.session(&id)?;
    let canvas = parse_sketch(&body).map_err(|e| ApiError::invalid(e.to_string()))?;
    let mut record = handle.lock().await;
    record.set_sketch(canvas)?;
    state.persist(&record);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateBody {
    pub prompt: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub candidates: Option<u32>,
}

async fn generate(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let handle = state.session(&id)?;
    let req: GenerateBody = parse_json(&body)?;
    let candidates = req.candidates.unwrap_or(state.default_candidates);
    if !(1..=MAX_CANDIDATES).contains(&candidates) {
        return Err(ApiError::invalid(format!("candidates must be in 1..={MAX_CANDIDATES}")));
    }
    let params = GenerationParams {
        prompt: req.prompt,
        seed: req.seed.unwrap_or(0),
        candidates,
    };

    let mut record = handle.lock().await;
    if record.state() == SessionState::Sketched && record.sketch.as_ref().is_some_and(|s| s.is_blank()) {
        return Err(ApiError::invalid("sketch has no strokes"));
    }
    record.begin_generation(params.clone())?;
    state.persist(&record);
    let canvas = record.sketch.clone().expect("sketched sessions have a sketch");
    let generation = record.generation;
    drop(record);

    let state = state.clone();
    tokio::spawn(async move {
        let result = state.pipeline.generate(&canvas, &params).await;
        let mut record = handle.lock().await;
        if record.generation != generation {
            return;
        }
        let applied = match result {
            Ok(o) => record.finish_generation(o.candidates, o.image_infer_ms, o.background_removal_ms, o.phase_ms),
            Err(e) => record.fail(e),
        };
        applied.expect("in-flight generation is owned by this task");
        state.persist(&record);
    });
    Ok(StatusCode::ACCEPTED)
}

async fn candidate_png(
    State(state): State<Arc<AppState>>,
    Path((id, k)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let handle = state.session(&id)?;
    let record = handle.lock().await;
    let png = k
        .parse::<usize>()
        .ok()
        .and_then(|k| record.candidates.get(k))
        .map(|c| c.png.clone())
        .ok_or_else(|| ApiError::not_found(format!("no candidate {k}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectBody {
    pub index: usize,
}

async fn select(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let handle = state.session(&id)?;
    let req: SelectBody = parse_json(&body)?;
    let mut record = handle.lock().await;
    record.select(req.index)?;
    state.persist(&record);
    let candidate = record.candidates[req.index].clone();
    let params = record.params.clone().expect("generated sessions have parameters");
    let prior = record.timings_ms;
    let generation = record.generation;
    drop(record);

    let state = state.clone();
    tokio::spawn(async move {
        let result = state.pipeline.build_asset(&id, &params, &candidate, prior).await;
        let mut record = handle.lock().await;
        if record.generation != generation {
            return;
        }
        let applied = match result {
            Ok(bundle) => record.finish(bundle),
            Err(e) => record.fail(e),
        };
        applied.expect("in-flight reconstruction is owned by this task");
        state.persist(&record);
    });
    Ok(StatusCode::ACCEPTED)
}

async fn with_asset<T>(state: &AppState, id: &str, f: impl FnOnce(&AssetBundle) -> T) -> ApiResult<T> {
    let handle = state.session(id)?;
    let record = handle.lock().await;
    if let Some(asset) = &record.asset {
        return Ok(f(asset));
    }
    match &record.error {
        Some(e) if record.state() == SessionState::Failed && e.backend_unavailable => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            format!("backend unavailable during {}: {}", e.stage, e.message),
        )),
        _ => Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("no asset in state {:?}", record.state()),
        )),
    }
}

async fn asset_manifest(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let json = with_asset(&state, &id, |a| a.manifest.to_json()).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], json))
}

async fn asset_obj(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let obj = with_asset(&state, &id, |a| a.obj_text.clone()).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=us-ascii")], obj))
}

async fn asset_mtl(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let mtl = with_asset(&state, &id, |a| a.mtl_text.clone()).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=us-ascii")], mtl))
}
