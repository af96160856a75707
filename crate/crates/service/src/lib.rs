//! HTTP job service under `/api/v1`.
//!
//! Generation runs as jobs: submit, poll, cancel. Refinement happens on
//! blocking threads, at most `workers` at a time, against one shared
//! immutable model that can be swapped by loading another directory.

pub mod jobs;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use tlcontrol::config::ServiceConfig;
use tlcontrol::container::{load_model, Manifest};
use tlcontrol::mtt::Mtt;
use tlcontrol::refine::{generate_motion, GenerateOptions};
use tlcontrol::wire::{GenerateRequest, GenerationResult, ValidRequest};

pub use jobs::{JobProgress, JobSnapshot, JobStatus, JobTable};

pub struct LoadedModel {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub model: Mtt,
}

impl LoadedModel {
    pub fn load(dir: &Path) -> tlcontrol::Result<LoadedModel> {
        Ok(LoadedModel { dir: dir.to_path_buf(), manifest: Manifest::read(dir)?, model: load_model(dir)? })
    }

    pub fn frames(&self) -> usize {
        self.model.config.max_len
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    jobs: JobTable,
    model: RwLock<Option<Arc<LoadedModel>>>,
    permits: Arc<Semaphore>,
    running: AtomicUsize,
    peak_running: AtomicUsize,
}

impl AppState {
    /// Must be called inside a Tokio runtime.
    pub fn new(config: ServiceConfig, model: Option<LoadedModel>) -> AppState {
        let workers = config.workers.max(1);
        AppState {
            inner: Arc::new(Inner {
                config,
                jobs: JobTable::spawn(),
                model: RwLock::new(model.map(Arc::new)),
                permits: Arc::new(Semaphore::new(workers)),
                running: AtomicUsize::new(0),
                peak_running: AtomicUsize::new(0),
            }),
        }
    }

    pub fn model(&self) -> Option<Arc<LoadedModel>> {
        self.inner.model.read().expect("model lock poisoned").clone()
    }

    pub fn set_model(&self, model: LoadedModel) {
        *self.inner.model.write().expect("model lock poisoned") = Some(Arc::new(model));
    }

    /// Most refinements ever observed running at once.
    pub fn peak_running(&self) -> usize {
        self.inner.peak_running.load(Ordering::SeqCst)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/jobs", axum::routing::post(submit))
        .route("/api/v1/jobs/{id}", get(poll).delete(cancel))
        .route("/api/v1/model", get(model_info).post(load))
        .route("/api/v1/health", get(health))
        .with_state(state)
}

pub async fn serve(config: ServiceConfig, model: Option<LoadedModel>) -> std::io::Result<()> {
    let addr: SocketAddr = config
        .bind
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bind address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config, model))).await
}

/// An error response: status code plus `{"error": ..., "field": ...}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError { status, message: message.into(), field: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(f) = self.field {
            body["field"] = json!(f);
        }
        (self.status, Json(body)).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: e.inner().to_string(),
            field: (path != ".").then_some(path),
        }
    })
}

#[derive(Serialize, Deserialize)]
pub struct Submitted {
    pub id: String,
}

async fn submit(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Submitted>), ApiError> {
    let request: GenerateRequest = parse_body(&body)?;
    let loaded = state.model().ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no model loaded"))?;
    let valid = request.validate(loaded.frames(), state.inner.config.max_samples).map_err(|e| ApiError {
        status: StatusCode::BAD_REQUEST,
        message: e.message,
        field: Some(e.field),
    })?;
    let (id, cancel) = state.inner.jobs.insert(request).await;
    tokio::spawn(run_job(state.clone(), loaded, id.clone(), valid, cancel));
    Ok((StatusCode::ACCEPTED, Json(Submitted { id })))
}

async fn run_job(state: AppState, loaded: Arc<LoadedModel>, id: String, request: ValidRequest, cancel: Arc<AtomicBool>) {
    let permit = state.inner.permits.clone().acquire_owned().await.expect("semaphore closed");
    let jobs = state.inner.jobs.clone();
    jobs.update(&id, jobs::Update::Status(JobStatus::Running));
    let inner = state.inner.clone();
    let job_id = id.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let now = inner.running.fetch_add(1, Ordering::SeqCst) + 1;
        inner.peak_running.fetch_max(now, Ordering::SeqCst);
        let out = execute(&loaded, &request, &cancel, &inner.jobs, &job_id);
        inner.running.fetch_sub(1, Ordering::SeqCst);
        out
    })
    .await;
    drop(permit);
    match outcome {
        Ok(Ok(result)) => jobs.update(&id, jobs::Update::Done(Box::new(result))),
        Ok(Err(tlcontrol::Error::Cancelled)) => jobs.update(&id, jobs::Update::Status(JobStatus::Cancelled)),
        Ok(Err(e)) => jobs.update(&id, jobs::Update::Failed(e.to_string())),
        Err(e) => jobs.update(&id, jobs::Update::Failed(format!("worker panicked: {e}"))),
    }
}

fn execute(
    loaded: &LoadedModel,
    request: &ValidRequest,
    cancel: &AtomicBool,
    jobs: &JobTable,
    id: &str,
) -> tlcontrol::Result<GenerationResult> {
    if cancel.load(Ordering::SeqCst) {
        return Err(tlcontrol::Error::Cancelled);
    }
    let options = GenerateOptions { num_samples: request.num_samples, optimize: request.optimize.clone(), skip_refinement: false };
    let n = request.num_samples as f64;
    let max_it = request.optimize.max_iterations as f64;
    let samples = generate_motion(&loaded.model, &request.text, &request.trajectory, request.seed, &options, &mut |p| {
        jobs.update(
            id,
            jobs::Update::Progress {
                sample: p.sample,
                iteration: p.iteration,
                objective: p.objective,
                fraction: (p.sample as f64 + (p.iteration as f64 / max_it).min(1.0)) / n,
            },
        );
        !cancel.load(Ordering::SeqCst)
    })?;
    if cancel.load(Ordering::SeqCst) {
        return Err(tlcontrol::Error::Cancelled);
    }
    GenerationResult::new(&samples, &request.trajectory)
}

async fn poll(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<JobSnapshot>, ApiError> {
    state.inner.jobs.get(&id).await.map(Json).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {id}")))
}

async fn cancel(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<(StatusCode, Json<JobSnapshot>), ApiError> {
    let snap = state
        .inner
        .jobs
        .cancel(&id)
        .await
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {id}")))?;
    let code = if snap.status.is_terminal() { StatusCode::OK } else { StatusCode::ACCEPTED };
    Ok((code, Json(snap)))
}

#[derive(Serialize, Deserialize)]
pub struct ModelInfo {
    pub dir: PathBuf,
    pub format: String,
    pub version: u32,
    pub weights_digest: String,
    pub frames: usize,
    pub vqvae: tlcontrol::vqvae::VqvaeConfig,
    pub mtt: Option<tlcontrol::mtt::MttConfig>,
}

fn info(m: &LoadedModel) -> ModelInfo {
    ModelInfo {
        dir: m.dir.clone(),
        format: m.manifest.format.clone(),
        version: m.manifest.version,
        weights_digest: m.manifest.weights_digest.clone(),
        frames: m.frames(),
        vqvae: m.manifest.vqvae.clone(),
        mtt: m.manifest.mtt.clone(),
    }
}

async fn model_info(State(state): State<AppState>) -> Result<Json<ModelInfo>, ApiError> {
    state.model().map(|m| Json(info(&m))).ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no model loaded"))
}

#[derive(Serialize, Deserialize)]
pub struct LoadRequest {
    pub dir: PathBuf,
}

/// Replaces the active model. Jobs already running keep the model they
/// started with.
async fn load(State(state): State<AppState>, body: Bytes) -> Result<Json<ModelInfo>, ApiError> {
    let req: LoadRequest = parse_body(&body)?;
    let loaded = tokio::task::spawn_blocking(move || LoadedModel::load(&req.dir))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, message: e.to_string(), field: Some("dir".into()) })?;
    let out = info(&loaded);
    state.set_model(loaded);
    Ok(Json(out))
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "model_loaded": state.model().is_some(),
        "workers": state.inner.config.workers.max(1),
        "running": state.inner.running.load(Ordering::SeqCst),
        "peak_running": state.peak_running(),
    }))
}
