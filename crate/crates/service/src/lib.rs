//! HTTP API over one session file.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/api/session` | | [`SessionView`] |
//! | POST | `/api/test` | [`TestRequest`] | `202` [`JobCreated`] |
//! | GET | `/api/job/{id}` | | [`JobView`] |
//! | POST | `/api/constraints` | [`ConstraintsRequest`] | list of [`LabelledItemset`] |
//! | POST | `/api/iterate` | [`IterateRequest`] | `IterationRecord` |
//!
//! One mutation or test job runs at a time; anything else that would start
//! work answers `409` while it runs. Every mutation is written to the
//! session file (temporary file plus rename) before the response is sent.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use exchmine_core::session::{load_session_file, save_session_file, IterationRecord, ModelKind, Strategy};
use exchmine_core::{Error, Itemset, RowClustering, SessionConfig, SessionState, SignificanceReport};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn busy() -> Self {
        ApiError::new(StatusCode::CONFLICT, "a job is already running")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Index(_) => StatusCode::NOT_FOUND,
            Error::SessionComplete => StatusCode::CONFLICT,
            Error::Io(_) | Error::Precondition(_) | Error::Corrupt(_) | Error::Migration { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LabelledItemset {
    pub label: String,
    pub items: Itemset,
    pub frequency: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetView {
    pub path: Option<String>,
    pub sha256: String,
    pub n_rows: usize,
    pub n_cols: usize,
    pub ones: usize,
    pub col_labels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionView {
    pub dataset: DatasetView,
    pub config: SessionConfig,
    pub mined: Vec<LabelledItemset>,
    pub constraints: Vec<LabelledItemset>,
    pub clustering: Option<RowClustering>,
    pub history: Vec<IterationRecord>,
}

fn labelled(s: &SessionState, fam: &exchmine_core::ItemsetFamily) -> Vec<LabelledItemset> {
    fam.itemsets()
        .iter()
        .enumerate()
        .map(|(i, x)| LabelledItemset {
            label: x.label(&s.dataset),
            items: x.clone(),
            frequency: fam.target(i).unwrap_or_default(),
        })
        .collect()
}

impl SessionView {
    pub fn new(s: &SessionState) -> Self {
        let d = &s.dataset;
        SessionView {
            dataset: DatasetView {
                path: s.dataset_ref.path.clone(),
                sha256: s.dataset_ref.sha256.clone(),
                n_rows: d.n_rows(),
                n_cols: d.n_cols(),
                ones: d.ones_count(),
                col_labels: (0..d.n_cols()).map(|c| d.col_label(c)).collect(),
            },
            config: s.config,
            mined: labelled(s, &s.mined),
            constraints: labelled(s, &s.constraints),
            clustering: s.clustering.clone(),
            history: s.history.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestRequest {
    pub model: ModelKind,
    /// Defaults to the session seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JobCreated {
    pub job: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JobView {
    pub id: u64,
    pub status: JobStatus,
    /// Finished chains over requested samples.
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<SignificanceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsRequest {
    #[serde(default)]
    pub add: Vec<String>,
    #[serde(default)]
    pub remove: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateRequest {
    pub strategy: Strategy,
}

struct Job {
    samples: usize,
    started: AtomicBool,
    done: AtomicUsize,
    outcome: Mutex<Option<std::result::Result<SignificanceReport, String>>>,
}

impl Job {
    fn view(&self, id: u64) -> JobView {
        let outcome = self.outcome.lock().expect("job lock").clone();
        let progress = self.done.load(Ordering::Relaxed) as f64 / self.samples.max(1) as f64;
        let (status, report, error) = match outcome {
            Some(Ok(r)) => (JobStatus::Done, Some(r), None),
            Some(Err(e)) => (JobStatus::Failed, None, Some(e)),
            None if self.started.load(Ordering::Relaxed) => (JobStatus::Running, None, None),
            None => (JobStatus::Pending, None, None),
        };
        JobView { id, status, progress: progress.min(1.0), report, error }
    }
}

/// Shared state behind the router.
pub struct AppState {
    session: Mutex<SessionState>,
    path: PathBuf,
    busy: AtomicBool,
    jobs: Mutex<HashMap<u64, Arc<Job>>>,
    next_job: AtomicUsize,
}

/// Clears the busy flag when dropped.
struct BusyGuard(Arc<AppState>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

impl AppState {
    pub fn new(session: SessionState, path: PathBuf) -> Arc<Self> {
        Arc::new(AppState {
            session: Mutex::new(session),
            path,
            busy: AtomicBool::new(false),
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicUsize::new(1),
        })
    }

    pub fn open(path: &Path) -> exchmine_core::Result<Arc<Self>> {
        Ok(Self::new(load_session_file(path)?, path.to_path_buf()))
    }

    pub fn snapshot(&self) -> SessionState {
        self.session.lock().expect("session lock").clone()
    }

    fn acquire(self: &Arc<Self>) -> ApiResult<BusyGuard> {
        self.busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| BusyGuard(self.clone()))
            .map_err(|_| ApiError::busy())
    }

    /// Persists `next` and makes it the current state.
    fn commit(&self, next: SessionState) -> ApiResult<()> {
        save_session_file(&next, &self.path)?;
        *self.session.lock().expect("session lock") = next;
        Ok(())
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/test", post(post_test))
        .route("/api/job/{id}", get(get_job))
        .route("/api/constraints", post(post_constraints))
        .route("/api/iterate", post(post_iterate))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is stopped. Binds to `addr`, normally loopback.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir.as_deref())).await
}

async fn get_session(State(app): State<Arc<AppState>>) -> Json<SessionView> {
    Json(SessionView::new(&app.session.lock().expect("session lock")))
}

async fn post_test(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<JobCreated>)> {
    let req: TestRequest = parse_body(&body)?;
    let session = app.snapshot();
    let model = session.model(req.model)?;
    let seed = req.seed.unwrap_or(session.config.seed);
    let guard = app.acquire()?;

    let id = app.next_job.fetch_add(1, Ordering::Relaxed) as u64;
    let job = Arc::new(Job {
        samples: session.config.samples,
        started: AtomicBool::new(false),
        done: AtomicUsize::new(0),
        outcome: Mutex::new(None),
    });
    app.jobs.lock().expect("jobs lock").insert(id, job.clone());
    tokio::task::spawn_blocking(move || {
        let _guard = guard;
        job.started.store(true, Ordering::Relaxed);
        let progress = |n: usize| job.done.store(n, Ordering::Relaxed);
        let outcome = session.test(&model, seed, Some(&progress)).map_err(|e| e.to_string());
        *job.outcome.lock().expect("job lock") = Some(outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job: id })))
}

async fn get_job(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobView>> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {id:?}"));
    let n: u64 = id.parse().map_err(|_| not_found())?;
    let job = app.jobs.lock().expect("jobs lock").get(&n).cloned().ok_or_else(not_found)?;
    Ok(Json(job.view(n)))
}

async fn post_constraints(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Vec<LabelledItemset>>> {
    let req: ConstraintsRequest = parse_body(&body)?;
    let _guard = app.acquire()?;
    let mut next = app.snapshot();
    for label in &req.add {
        let x = Itemset::from_labels(&next.dataset, label)?;
        if x.is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty itemset"));
        }
        next.add_constraint(x)?;
    }
    for label in &req.remove {
        let x = Itemset::from_labels(&next.dataset, label)?;
        if !next.remove_constraint(&x) {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("{label:?} is not a constraint")));
        }
    }
    let view = labelled(&next, &next.constraints);
    app.commit(next)?;
    Ok(Json(view))
}

async fn post_iterate(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<IterationRecord>> {
    let req: IterateRequest = parse_body(&body)?;
    let guard = app.acquire()?;
    let app2 = app.clone();
    tokio::task::spawn_blocking(move || {
        let _guard = guard;
        let mut next = app2.snapshot();
        let record = next.iterate(req.strategy, None)?.clone();
        app2.commit(next)?;
        Ok(Json(record))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_statuses() {
        let status = |e: Error| ApiError::from(e).status;
        assert_eq!(status(Error::Index("x".into())), StatusCode::NOT_FOUND);
        assert_eq!(status(Error::SessionComplete), StatusCode::CONFLICT);
        assert_eq!(status(Error::Usage("x".into())), StatusCode::BAD_REQUEST);
        assert_eq!(status(Error::Shape("x".into())), StatusCode::BAD_REQUEST);
        assert_eq!(status(Error::Corrupt("x".into())), StatusCode::INTERNAL_SERVER_ERROR);
        assert_eq!(status(Error::Io(std::io::Error::other("disk"))), StatusCode::INTERNAL_SERVER_ERROR);
    }

    #[test]
    fn body_parsing() {
        let ok: ConstraintsRequest = parse_body(&Bytes::from_static(br#"{"add": ["A"]}"#)).unwrap();
        assert_eq!(ok.add, ["A"]);
        assert!(ok.remove.is_empty());
        let err = parse_body::<ConstraintsRequest>(&Bytes::from_static(br#"{"add": ["A"], "drop": 1}"#)).unwrap_err();
        assert_eq!(err.status, StatusCode::BAD_REQUEST);
        assert!(parse_body::<IterateRequest>(&Bytes::new()).is_err());
    }
}
