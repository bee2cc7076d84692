//! HTTP API over a project for the review UI.
//!
//! Decisions are serialized through one in-memory [`ReviewStore`] guarded by
//! a mutex; pipeline runs go through the project's run lock and reload the
//! store when they finish.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use currikg::error::{ExtractError, ProjectError, ProviderError, ReviewError, SimilarityError};
use currikg::extract::CandidateStatus;
use currikg::project::Project;
use currikg::review::{sample_relations, Aspect, Decision, EditPolicy, ReviewStore, Reviewed, Verdict};
use currikg::similarity::RelationStatus;

pub struct AppState {
    project: Project,
    store: Mutex<ReviewStore>,
    allow_runs: bool,
}

impl AppState {
    pub fn new(project: Project, allow_runs: bool) -> Result<Self, ProjectError> {
        let store = project.store()?;
        Ok(AppState {
            project,
            store: Mutex::new(store),
            allow_runs,
        })
    }

    fn store(&self) -> MutexGuard<'_, ReviewStore> {
        // A panic while holding the lock leaves the store consistent: every
        // mutation is validated before it is applied.
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// The store, re-read from disk so writes by other processes (the CLI)
    /// are seen before a mutation is validated.
    fn fresh_store(&self) -> Result<MutexGuard<'_, ReviewStore>, ApiError> {
        let mut guard = self.store();
        *guard = self.project.store()?;
        Ok(guard)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

fn provider_error(e: &ProviderError) -> (StatusCode, &'static str) {
    match e {
        ProviderError::Format { .. } => (StatusCode::SERVICE_UNAVAILABLE, "provider_format"),
        ProviderError::Config(_) | ProviderError::UnknownProvider(_) => (StatusCode::BAD_REQUEST, "provider_config"),
        _ => (StatusCode::SERVICE_UNAVAILABLE, "provider_unavailable"),
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let (status, code) = match &e {
            ReviewError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ReviewError::AlreadyDecided(_) => (StatusCode::CONFLICT, "already_decided"),
            ReviewError::InvalidEdit { .. } => (StatusCode::BAD_REQUEST, "invalid_edit"),
            ReviewError::InvalidFraction(_) => (StatusCode::BAD_REQUEST, "invalid_fraction"),
            ReviewError::InsufficientData(_) => (StatusCode::NOT_FOUND, "insufficient_data"),
            ReviewError::OrphanSubTopic { .. } | ReviewError::EmptyTopic { .. } => {
                (StatusCode::CONFLICT, "promotion_blocked")
            }
            ReviewError::MissingSession(_) => (StatusCode::CONFLICT, "missing_session"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let e = match e {
            ProjectError::Review(r) => return r.into(),
            other => other,
        };
        let (status, code) = match &e {
            ProjectError::Locked(_) => (StatusCode::CONFLICT, "run_in_progress"),
            ProjectError::UnknownSession(_) => (StatusCode::NOT_FOUND, "not_found"),
            ProjectError::Config(_) => (StatusCode::BAD_REQUEST, "config"),
            ProjectError::Provider(p)
            | ProjectError::Extract(ExtractError::Provider(p))
            | ProjectError::Extract(ExtractError::Similarity(SimilarityError::Provider(p)))
            | ProjectError::Similarity(SimilarityError::Provider(p)) => provider_error(p),
            ProjectError::Metrics(_) => (StatusCode::NOT_FOUND, "no_metrics"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/candidates", get(list_candidates))
        .route("/api/candidates/{id}", get(get_candidate))
        .route("/api/candidates/{id}/decision", post(decide_candidate))
        .route("/api/relations", get(list_relations))
        .route("/api/relations/sample", get(sample))
        .route("/api/relations/{id}/decision", post(decide_relation))
        .route("/api/graph", get(graph))
        .route("/api/metrics", get(structure_metrics))
        .route("/api/metrics/extraction", get(extraction_metrics))
        .route("/api/runs", post(run_stage))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

fn parse_query<T: std::str::FromStr>(value: Option<&str>, what: &str) -> Result<Option<T>, ApiError> {
    value
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::bad_request(format!("invalid {what} {v:?}")))
        })
        .transpose()
}

#[derive(Deserialize)]
struct CandidateQuery {
    status: Option<String>,
    session: Option<String>,
}

fn candidate_status(s: &str) -> Result<CandidateStatus, ()> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| ())
}

async fn list_candidates(
    State(state): State<Arc<AppState>>,
    Query(q): Query<CandidateQuery>,
) -> ApiResult<Vec<currikg::extract::CandidateConcept>> {
    let status = match q.status.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(candidate_status(s).map_err(|_| ApiError::bad_request(format!("invalid status {s:?}")))?),
        None => None,
    };
    let session = q.session.as_deref().filter(|s| !s.is_empty());
    let store = state.store();
    Ok(Json(
        store.filter_candidates(status, session).into_iter().cloned().collect(),
    ))
}

async fn get_candidate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<currikg::extract::CandidateConcept> {
    state
        .store()
        .candidate(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ReviewError::NotFound(id).into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    verdict: Verdict,
    #[serde(default)]
    aspect: Aspect,
    edited_title: Option<String>,
    edited_description: Option<String>,
    edited_parent: Option<String>,
    reviewer: String,
    #[serde(default, rename = "override")]
    override_previous: bool,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn to_decision(id: String, body: DecisionBody) -> Result<Decision, ApiError> {
    if body.reviewer.trim().is_empty() {
        return Err(ApiError::bad_request("reviewer must not be empty"));
    }
    let mut d = Decision::new(id, body.verdict, body.reviewer);
    d.aspect = body.aspect;
    d.edited_title = body.edited_title;
    d.edited_description = body.edited_description;
    d.edited_parent = body.edited_parent;
    d.override_previous = body.override_previous;
    Ok(d)
}

async fn decide_candidate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<Json<Reviewed>, ApiError> {
    let body: DecisionBody = parse_body(&body)?;
    let mut store = state.fresh_store()?;
    if store.candidate(&id).is_none() {
        return Err(ReviewError::NotFound(id).into());
    }
    Ok(Json(store.record_decision(to_decision(id, body)?)?))
}

#[derive(Deserialize)]
struct RelationQuery {
    status: Option<String>,
}

async fn list_relations(
    State(state): State<Arc<AppState>>,
    Query(q): Query<RelationQuery>,
) -> ApiResult<Vec<currikg::similarity::SemanticRelation>> {
    let status = match q.status.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(
            serde_json::from_value::<RelationStatus>(Value::String(s.to_string()))
                .map_err(|_| ApiError::bad_request(format!("invalid status {s:?}")))?,
        ),
        None => None,
    };
    Ok(Json(
        state.store().filter_relations(status).into_iter().cloned().collect(),
    ))
}

#[derive(Deserialize)]
struct SampleQuery {
    seed: Option<String>,
    fraction: Option<String>,
}

async fn sample(
    State(state): State<Arc<AppState>>,
    Query(q): Query<SampleQuery>,
) -> ApiResult<Vec<currikg::similarity::SemanticRelation>> {
    let cfg = &state.project.config().sampling;
    let seed = parse_query::<u64>(q.seed.as_deref(), "seed")?.unwrap_or(cfg.seed);
    let fraction = parse_query::<f64>(q.fraction.as_deref(), "fraction")?.unwrap_or(cfg.fraction);
    let store = state.store();
    Ok(Json(sample_relations(
        store.relations(),
        fraction,
        cfg.min_count,
        seed,
    )?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationDecisionBody {
    verdict: Verdict,
    reviewer: String,
    #[serde(default, rename = "override")]
    override_previous: bool,
}

async fn decide_relation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<Json<Reviewed>, ApiError> {
    let body: RelationDecisionBody = parse_body(&body)?;
    let mut store = state.fresh_store()?;
    if store.relation(&id).is_none() {
        return Err(ReviewError::NotFound(id).into());
    }
    if body.verdict == Verdict::Edit {
        return Err(ApiError::bad_request("relations can only be accepted or rejected"));
    }
    let decision = to_decision(
        id,
        DecisionBody {
            verdict: body.verdict,
            aspect: Aspect::Concept,
            edited_title: None,
            edited_description: None,
            edited_parent: None,
            reviewer: body.reviewer,
            override_previous: body.override_previous,
        },
    )?;
    Ok(Json(store.record_decision(decision)?))
}

async fn graph(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let graph = state.project.load_graph()?;
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], graph.export()).into_response())
}

async fn structure_metrics(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let project = state.project.clone();
    let report = tokio::task::spawn_blocking(move || project.structure_metrics())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(report).into_response())
}

#[derive(Deserialize)]
struct ExtractionQuery {
    policy: Option<String>,
}

async fn extraction_metrics(
    State(state): State<Arc<AppState>>,
    Query(q): Query<ExtractionQuery>,
) -> ApiResult<currikg::review::ExtractionMetrics> {
    let policy =
        parse_query::<EditPolicy>(q.policy.as_deref(), "policy")?.unwrap_or(state.project.config().edit_policy);
    let store = state.store();
    let kinds = currikg::review::decided_kinds(store.candidates());
    if kinds.is_empty() {
        return Err(ReviewError::InsufficientData("any kind".into()).into());
    }
    Ok(Json(currikg::review::compute_extraction_metrics(
        store.candidates(),
        store.missing(),
        &kinds,
        policy,
    )?))
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
enum Stage {
    Extract,
    Link,
    Promote,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    stage: Stage,
}

async fn run_stage(State(state): State<Arc<AppState>>, body: axum::body::Bytes) -> Result<Json<Value>, ApiError> {
    if !state.allow_runs {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "runs_disabled",
            "pipeline runs over HTTP are disabled; start the service with --allow-runs",
        ));
    }
    let body: RunBody = parse_body(&body)?;
    let worker = state.clone();
    let result = tokio::task::spawn_blocking(move || -> Result<Value, ProjectError> {
        let p = &worker.project;
        let report = match body.stage {
            Stage::Extract => serde_json::to_value(p.extract(None)?),
            Stage::Link => serde_json::to_value(p.link(None)?),
            Stage::Promote => serde_json::to_value(p.promote()?),
        }
        .expect("reports serialize");
        *worker.store() = p.store()?;
        Ok(json!({ "stage": body.stage, "report": report }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(result))
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, ServeError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| {
        if source.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse(addr.port())
        } else {
            ServeError::Bind { addr, source }
        }
    })
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
