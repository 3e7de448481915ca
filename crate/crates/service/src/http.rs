//! HTTP API over the session engine.
//!
//! Engine calls block (generation waits on the model), so every one runs on
//! the blocking pool. API keys live only in [`AppState`] and request
//! headers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::header::{self, HeaderMap, HeaderName, HeaderValue};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use exoar_core::domain::{EditAction, EditKind, Step};
use exoar_core::gateway::GenerationConfig;
use exoar_core::ingest::TitleStat;
use exoar_core::ocel::{build_ocel, serialize_ocel, ExportManifest};
use exoar_core::session::{edits_by_step, DatasetRef, Engine, PriceTable, StepStatus};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::{ApiError, ErrorCode};
use crate::llm::BackendFactory;
use crate::report::{metrics_tsv, CostReport};

pub const API_KEY_HEADER: &str = "x-api-key";
pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;
const TOP_TITLES: usize = 20;

/// Manifest counts sent as export response headers.
pub const MANIFEST_HEADERS: [&str; 7] = [
    "x-ocel-object-types",
    "x-ocel-event-types",
    "x-ocel-objects",
    "x-ocel-events",
    "x-window-events",
    "x-enriched-window-events",
    "x-excluded-window-events",
];

/// Settings applied to every session created over HTTP.
#[derive(Debug, Clone, Default)]
pub struct SessionDefaults {
    pub config: GenerationConfig,
    pub prices: Option<PriceTable>,
}

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    llm: BackendFactory,
    defaults: SessionDefaults,
    keys: Arc<Mutex<HashMap<String, String>>>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, llm: BackendFactory, defaults: SessionDefaults) -> Self {
        AppState { engine, llm, defaults, keys: Arc::default() }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    fn keys(&self) -> std::sync::MutexGuard<'_, HashMap<String, String>> {
        self.keys.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/steps/{n}/generate", post(generate))
        .route("/sessions/{id}/steps/{n}/review", post(review))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/cost", get(cost))
        .route("/sessions/{id}/export/ocel", get(export_ocel))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such route") })
        .method_not_allowed_fallback(|| async { ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed") })
        .layer(middleware::map_response(code_plain_errors))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(CatchPanicLayer::custom(|_| ApiError::new(ErrorCode::Internal, "internal error").into_response()))
        .with_state(state);
    if !cors_origins.is_empty() {
        let origins: Vec<HeaderValue> = cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
        let mut expose: Vec<HeaderName> = MANIFEST_HEADERS.iter().map(|h| HeaderName::from_static(h)).collect();
        expose.push(header::CONTENT_DISPOSITION);
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods(tower_http::cors::Any)
                .allow_headers([header::CONTENT_TYPE, header::ACCEPT, HeaderName::from_static(API_KEY_HEADER)])
                .expose_headers(expose),
        );
    }
    app
}

/// Extractor rejections from axum arrive as plain text; recode them so every
/// error body carries a code.
async fn code_plain_errors(resp: Response) -> Response {
    let status = resp.status();
    let is_json = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .is_some_and(|v| v.as_bytes().starts_with(b"application/json"));
    if !(status.is_client_error() || status.is_server_error()) || is_json {
        return resp;
    }
    let code = match status {
        StatusCode::NOT_FOUND => ErrorCode::NotFound,
        StatusCode::METHOD_NOT_ALLOWED => ErrorCode::MethodNotAllowed,
        StatusCode::PAYLOAD_TOO_LARGE => ErrorCode::PayloadTooLarge,
        s if s.is_server_error() => ErrorCode::Internal,
        _ => ErrorCode::BadRequest,
    };
    let body = axum::body::to_bytes(resp.into_body(), 4096).await.unwrap_or_default();
    let message = String::from_utf8_lossy(&body).trim().to_owned();
    let message = if message.is_empty() { status.canonical_reason().unwrap_or("error").to_owned() } else { message };
    ApiError::new(code, message).into_response()
}

/// Runs an engine call on the blocking pool.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

fn api_key(headers: &HeaderMap) -> Option<String> {
    headers
        .get(API_KEY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(str::to_owned)
}

fn parse_step(n: &str) -> Result<Step, ApiError> {
    n.parse::<u8>()
        .ok()
        .and_then(|n| Step::from_number(n).ok())
        .ok_or_else(|| ApiError::new(ErrorCode::InvalidStep, format!("step must be 1 to 4, got {n:?}")))
}

#[derive(Debug, Serialize)]
pub struct Created {
    pub id: String,
    pub profession: String,
    pub dataset: DatasetRef,
    /// The most frequent titles, for a first look at the data.
    pub top_titles: Vec<TitleStat>,
    pub statuses: [StepStatus; 4],
}

fn bad_multipart(e: impl std::fmt::Display + HasStatus) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(ErrorCode::PayloadTooLarge, format!("upload exceeds {MAX_UPLOAD_BYTES} bytes"))
    } else {
        ApiError::new(ErrorCode::BadRequest, e.to_string())
    }
}

trait HasStatus {
    fn status(&self) -> StatusCode;
}

impl HasStatus for MultipartRejection {
    fn status(&self) -> StatusCode {
        MultipartRejection::status(self)
    }
}

impl HasStatus for axum::extract::multipart::MultipartError {
    fn status(&self) -> StatusCode {
        axum::extract::multipart::MultipartError::status(self)
    }
}

fn parse_number<T: std::str::FromStr>(field: &str, text: &str) -> Result<T, ApiError> {
    text.trim()
        .parse()
        .map_err(|_| ApiError::new(ErrorCode::BadRequest, format!("{field} must be a positive integer")))
}

/// `multipart/form-data` with `profession`, `file` and optionally
/// `batch_size` and `token_ceiling`.
async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let mut multipart = multipart.map_err(bad_multipart)?;
    let mut profession = None;
    let mut file = None;
    let mut config = state.defaults.config.clone();
    while let Some(field) = multipart.next_field().await.map_err(bad_multipart)? {
        let name = field.name().unwrap_or_default().to_owned();
        match name.as_str() {
            "file" => {
                let source = field.file_name().filter(|n| !n.is_empty()).unwrap_or("upload.csv").to_owned();
                file = Some((source, field.bytes().await.map_err(bad_multipart)?));
            }
            "profession" => profession = Some(field.text().await.map_err(bad_multipart)?),
            "batch_size" => {
                let n: usize = parse_number(&name, &field.text().await.map_err(bad_multipart)?)?;
                config.batch_size = Some(n.max(1));
            }
            "token_ceiling" => {
                config.token_ceiling = Some(parse_number(&name, &field.text().await.map_err(bad_multipart)?)?);
            }
            other => return Err(ApiError::new(ErrorCode::BadRequest, format!("unexpected form field {other:?}"))),
        }
    }
    let profession = profession.unwrap_or_default();
    let (source, raw) = file.ok_or_else(|| ApiError::new(ErrorCode::BadRequest, "missing form field \"file\""))?;
    let key = api_key(&headers);
    let prices = state.defaults.prices.clone();
    let engine = state.engine.clone();
    let (session, dataset) =
        blocking(move || Ok(engine.create_session(&profession, &raw, &source, config, prices)?)).await?;
    if let Some(key) = key {
        state.keys().insert(session.id.clone(), key);
    }
    let created = Created {
        id: session.id.clone(),
        profession: session.profession.clone(),
        dataset: session.dataset.clone(),
        top_titles: dataset.stats.iter().take(TOP_TITLES).cloned().collect(),
        statuses: session.steps.statuses(),
    };
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_sessions(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let engine = state.engine.clone();
    let ids = blocking(move || Ok(engine.store().list()?)).await?;
    Ok(Json(json!({ "sessions": ids })))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let session = blocking(move || Ok(engine.session(&id)?)).await?;
    Ok(Json(session).into_response())
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let engine = state.engine.clone();
    let target = id.clone();
    blocking(move || Ok(engine.delete(&target)?)).await?;
    state.keys().remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

async fn generate(
    State(state): State<AppState>,
    Path((id, n)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let step = parse_step(&n)?;
    let key = match api_key(&headers) {
        Some(k) => {
            state.keys().insert(id.clone(), k.clone());
            Some(k)
        }
        None => state.keys().get(&id).cloned(),
    };
    let (engine, llm) = (state.engine.clone(), state.llm.clone());
    // the live client blocks, so it is built and dropped off the async workers
    let generation = blocking(move || {
        let backend = llm.backend(key.as_deref())?.ok_or_else(|| {
            ApiError::new(ErrorCode::MissingApiKey, format!("send the model API key in the {API_KEY_HEADER} header"))
        })?;
        Ok(engine.run_generation(&id, step, backend.as_ref())?)
    })
    .await?;
    Ok(Json(generation).into_response())
}

/// One review edit as sent by a client; the step comes from the path.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditInput {
    pub kind: EditKind,
    pub target: String,
    #[serde(default)]
    pub replacement: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewBody {
    pub edits: Vec<EditInput>,
}

fn review_edits(step: Step, headers: &HeaderMap, body: &[u8]) -> Result<Vec<EditAction>, ApiError> {
    let content_type = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("application/json");
    if content_type.starts_with("text/plain") {
        let text = std::str::from_utf8(body)
            .map_err(|_| ApiError::new(ErrorCode::BadRequest, "edit script is not UTF-8"))?;
        let by_step = edits_by_step(text)?;
        if let Some(other) = Step::ALL.into_iter().find(|s| *s != step && !by_step[s.index()].is_empty()) {
            return Err(ApiError::new(
                ErrorCode::StepMismatch,
                format!("edit for step {other} submitted to step {step}"),
            )
            .with_details(json!({ "expected": step, "found": other })));
        }
        return Ok(by_step[step.index()].clone());
    }
    if !content_type.starts_with("application/json") {
        return Err(ApiError::new(
            ErrorCode::BadRequest,
            format!("unsupported content type {content_type:?}; use application/json or text/plain"),
        ));
    }
    let body: ReviewBody =
        serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid review body: {e}")))?;
    let now = chrono::Utc::now();
    Ok(body
        .edits
        .into_iter()
        .map(|e| EditAction { kind: e.kind, step, target: e.target, replacement: e.replacement, timestamp: now })
        .collect())
}

/// Accepts `{"edits": [...]}` as JSON or an edit script as `text/plain`.
async fn review(
    State(state): State<AppState>,
    Path((id, n)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let step = parse_step(&n)?;
    let edits = review_edits(step, &headers, &body)?;
    let engine = state.engine.clone();
    let review = blocking(move || Ok(engine.submit_review(&id, step, edits)?)).await?;
    Ok(Json(review).into_response())
}

/// JSON by default; TSV with `?format=tsv` or `Accept: text/tab-separated-values`.
async fn metrics(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let wants_tsv = match query.get("format").map(String::as_str) {
        Some("tsv") => true,
        Some("json") => false,
        Some(other) => return Err(ApiError::new(ErrorCode::BadRequest, format!("unknown format {other:?}"))),
        None => headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|a| a.contains("text/tab-separated-values")),
    };
    let engine = state.engine.clone();
    let rows = blocking(move || Ok(engine.metrics(&id)?)).await?;
    if wants_tsv {
        Ok(([(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")], metrics_tsv(&rows)).into_response())
    } else {
        Ok(Json(json!({ "rows": rows })).into_response())
    }
}

async fn cost(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<CostReport>, ApiError> {
    let engine = state.engine.clone();
    let report = blocking(move || Ok(CostReport::for_session(&engine.session(&id)?)?)).await?;
    Ok(Json(report))
}

fn manifest_headers(manifest: &ExportManifest) -> [(HeaderName, HeaderValue); 7] {
    let values = [
        manifest.object_types,
        manifest.event_types,
        manifest.objects,
        manifest.events,
        manifest.window_events,
        manifest.enriched_window_events,
        manifest.excluded_window_events,
    ];
    std::array::from_fn(|i| (HeaderName::from_static(MANIFEST_HEADERS[i]), HeaderValue::from(values[i])))
}

/// OCEL 2.0 JSON as an attachment. HEAD returns the same headers.
async fn export_ocel(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let (bytes, manifest) = blocking(move || {
        let (session, dataset) = engine.snapshot(&id)?;
        let (doc, manifest) = build_ocel(&session, &dataset)?;
        Ok((serialize_ocel(&doc)?, manifest))
    })
    .await?;
    let disposition = format!("attachment; filename=\"ocel-{}.json\"", manifest.session_id);
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    headers.insert(
        header::CONTENT_DISPOSITION,
        HeaderValue::from_str(&disposition).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?,
    );
    headers.extend(manifest_headers(&manifest));
    Ok((headers, bytes).into_response())
}
