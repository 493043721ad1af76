//! HTTP facade over the smocklab pipeline: pattern sessions, simulation jobs
//! and mesh download.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create from a pattern file, 201 |
//! | GET | `/sessions/{id}` | session document |
//! | PUT | `/sessions/{id}/pattern` | replace the pattern, clears results |
//! | POST | `/sessions/{id}/simulate` | 200 with diagnostics, or 202 with a job |
//! | GET | `/sessions/{id}/result/mesh` | OBJ, `?variant=merged\|fine&color=none\|height\|energy` |
//! | GET | `/sessions/{id}/result/diagnostics` | energies, constraint report, shrinkage |
//! | GET | `/jobs/{id}` | status of an asynchronous simulation |
//! | GET | `/healthz` | `ok` |

pub mod session;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use smocklab_core::design::PipelineParams;
use smocklab_core::graph::extract;
use smocklab_core::io::{run_obj, ColorField, MeshVariant, PatternFile};
use smocklab_core::{Error, Stage};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use session::{DesignSession, SessionResults};
pub use store::Store;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Session store directory; `None` keeps sessions in memory.
    pub data_dir: Option<PathBuf>,
    /// Patterns with at most this many smocked-graph nodes solve within the request.
    pub sync_node_limit: usize,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { data_dir: None, sync_node_limit: 200, cors_origin: None }
    }
}

struct SessionSlot {
    doc: Mutex<DesignSession>,
    busy: AtomicBool,
}

/// Clears the busy flag of a session when the simulation holding it ends.
struct BusyGuard(Arc<SessionSlot>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase", tag = "status")]
enum JobStatus {
    Running { session: String },
    Done { session: String, converged: bool },
    Failed { session: String, error: String },
}

struct Inner {
    config: ServiceConfig,
    store: Store,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
    jobs: Mutex<HashMap<String, JobStatus>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Loads every committed session from the configured store.
    pub fn new(config: ServiceConfig) -> std::io::Result<AppState> {
        let (store, sessions) = match &config.data_dir {
            Some(dir) => Store::open(dir.clone())?,
            None => (Store::ephemeral(), Vec::new()),
        };
        let sessions = sessions
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(SessionSlot { doc: Mutex::new(s), busy: AtomicBool::new(false) })))
            .collect();
        Ok(AppState(Arc::new(Inner {
            config,
            store,
            sessions: Mutex::new(sessions),
            jobs: Mutex::new(HashMap::new()),
        })))
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.0.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("session {id} not found")))
    }

    fn persist(&self, doc: &DesignSession) -> Result<(), ApiError> {
        self.0.store.append(doc).map_err(|e| ApiError::Internal(format!("store write failed: {e}")))
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Unprocessable { message: String, pointer: Option<String> },
    Conflict(String),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::Schema { pointer, message } => ApiError::Unprocessable { message: message.clone(), pointer: Some(pointer.clone()) },
            _ if e.is_input_error() => ApiError::Unprocessable { message: e.to_string(), pointer: None },
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::Unprocessable { message, pointer: Some(p) } => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": message, "pointer": p }))
            }
            ApiError::Unprocessable { message, pointer: None } => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": message })),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, json!({ "error": m })),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": m })),
        };
        (status, Json(body)).into_response()
    }
}

fn parse_pattern(body: &[u8]) -> Result<PatternFile, ApiError> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::Unprocessable { message: "body is not UTF-8".into(), pointer: None })?;
    Ok(PatternFile::parse(text)?)
}

async fn healthz() -> &'static str {
    "ok"
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let pattern = parse_pattern(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let doc = DesignSession::new(id.clone(), pattern);
    app.persist(&doc)?;
    let slot = Arc::new(SessionSlot { doc: Mutex::new(doc), busy: AtomicBool::new(false) });
    app.0.sessions.lock().unwrap().insert(id.clone(), slot);
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let doc = slot.doc.lock().unwrap();
    Ok(Json(doc.view()).into_response())
}

async fn put_pattern(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let pattern = parse_pattern(&body)?;
    if slot.busy.load(Ordering::Acquire) {
        return Err(ApiError::Conflict(format!("session {id} is simulating")));
    }
    let mut doc = slot.doc.lock().unwrap();
    doc.pattern = pattern;
    doc.results = None;
    doc.touch();
    app.persist(&doc)?;
    Ok(Json(doc.view()).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    #[serde(default)]
    stage: Option<Stage>,
    #[serde(default)]
    params: Option<PipelineParams>,
}

fn parse_request(body: &[u8]) -> Result<SimulateRequest, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(SimulateRequest::default());
    }
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let mut pointer = String::new();
        for seg in e.path().iter() {
            use serde_path_to_error::Segment;
            match seg {
                Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                Segment::Map { key } => pointer.push_str(&format!("/{key}")),
                Segment::Enum { variant } => pointer.push_str(&format!("/{variant}")),
                Segment::Unknown => pointer.push_str("/?"),
            }
        }
        ApiError::Unprocessable {
            message: e.inner().to_string(),
            pointer: Some(if pointer.is_empty() { "/".into() } else { pointer }),
        }
    })
}

fn commit(app: &AppState, slot: &SessionSlot, params: Option<PipelineParams>, results: SessionResults) -> Result<bool, ApiError> {
    let converged = results.diagnostics.converged;
    let mut doc = slot.doc.lock().unwrap();
    if params.is_some() {
        doc.params = params;
    }
    doc.results = Some(results);
    doc.touch();
    app.persist(&doc)?;
    Ok(converged)
}

async fn simulate(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req = parse_request(&body)?;
    let slot = app.slot(&id)?;
    if slot.busy.swap(true, Ordering::AcqRel) {
        return Err(ApiError::Conflict(format!("session {id} is already simulating")));
    }
    let guard = BusyGuard(slot.clone());
    let (pattern, params) = {
        let doc = slot.doc.lock().unwrap();
        let params = req.params.clone().unwrap_or_else(|| doc.effective_params());
        (doc.pattern.clone(), params)
    };
    let p = pattern.to_pattern()?;
    let nodes = extract(&p)?.num_nodes();
    let stage = match req.stage {
        None | Some(Stage::Arap) => Stage::Merge,
        Some(s) => s,
    };
    let overrides = req.params;
    let job = {
        let (p, params) = (p.clone(), params.clone());
        move || session::simulate(&p, &params, stage)
    };

    if nodes <= app.0.config.sync_node_limit {
        let results = tokio::task::spawn_blocking(job).await.map_err(|e| ApiError::Internal(e.to_string()))??;
        let diagnostics = results.diagnostics.clone();
        commit(&app, &slot, overrides, results)?;
        drop(guard);
        return Ok(Json(json!({ "converged": diagnostics.converged, "diagnostics": diagnostics })).into_response());
    }

    let job_id = uuid::Uuid::new_v4().simple().to_string();
    app.0.jobs.lock().unwrap().insert(job_id.clone(), JobStatus::Running { session: id.clone() });
    let (app2, job_key) = (app.clone(), job_id.clone());
    tokio::spawn(async move {
        let _guard = guard;
        let status = match tokio::task::spawn_blocking(job).await {
            Ok(Ok(results)) => match commit(&app2, &slot, overrides, results) {
                Ok(converged) => JobStatus::Done { session: id, converged },
                Err(e) => JobStatus::Failed { session: id, error: format!("{e:?}") },
            },
            Ok(Err(e)) => JobStatus::Failed { session: id, error: e.to_string() },
            Err(e) => JobStatus::Failed { session: id, error: e.to_string() },
        };
        app2.0.jobs.lock().unwrap().insert(job_key, status);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job_id, "status_url": format!("/jobs/{job_id}") }))).into_response())
}

async fn job_status(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let jobs = app.0.jobs.lock().unwrap();
    let status = jobs.get(&id).ok_or_else(|| ApiError::NotFound(format!("job {id} not found")))?;
    Ok(Json(status).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct MeshQuery {
    #[serde(default)]
    variant: MeshVariant,
    #[serde(default)]
    color: ColorField,
}

async fn mesh(State(app): State<AppState>, Path(id): Path<String>, Query(q): Query<MeshQuery>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let (pattern, run) = {
        let doc = slot.doc.lock().unwrap();
        let results = doc.results.as_ref().ok_or_else(|| ApiError::NotFound("result not found".into()))?;
        (doc.pattern.clone(), results.run.clone())
    };
    let p = pattern.to_pattern()?;
    let obj = run_obj(&p, &run, q.variant, q.color)?.ok_or_else(|| ApiError::NotFound("result has no mesh".into()))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], obj).into_response())
}

async fn result_diagnostics(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let doc = slot.doc.lock().unwrap();
    let results = doc.results.as_ref().ok_or_else(|| ApiError::NotFound("result not found".into()))?;
    Ok(Json(&results.diagnostics).into_response())
}

fn cors(origin: Option<&str>) -> CorsLayer {
    let allow = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST, Method::PUT])
        .allow_headers([header::CONTENT_TYPE])
}

pub fn router(state: AppState) -> Router {
    let layer = cors(state.0.config.cors_origin.as_deref());
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/pattern", put(put_pattern))
        .route("/sessions/{id}/simulate", post(simulate))
        .route("/sessions/{id}/result/mesh", get(mesh))
        .route("/sessions/{id}/result/diagnostics", get(result_diagnostics))
        .route("/jobs/{id}", get(job_status))
        .layer(layer)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let app = router(AppState::new(config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
