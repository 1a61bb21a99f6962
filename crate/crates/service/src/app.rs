//! The `/v1` HTTP API.
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | POST | `/v1/tasks` | `{question, template_id?}` | `201` task |
//! | GET | `/v1/tasks` | `?status=Open\|Annotated` | `{tasks: [..]}` |
//! | GET | `/v1/tasks/{id}` | | task |
//! | POST | `/v1/tasks/{id}/annotation` | annotation record | `{accepted, task_id, annotator_id, version}` |
//! | GET | `/v1/tasks/{id}/annotations` | | `{annotations: [{version, latest, record}]}` |
//! | GET | `/v1/exports/{kind}` | | JSONL |
//! | GET | `/v1/health` | | build info |
//!
//! Failures answer `{"error": {"code", "message", "details"?}}`.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use stepverify_core::annotation::{AnnotationRecord, TaskStatus};
use stepverify_core::export::{render_kind, ExportKind};
use stepverify_core::store::TaskFilter;

use crate::error::ApiError;
use crate::workflow::{Workflow, DEFAULT_TEMPLATE};

#[derive(Clone)]
pub struct AppState {
    pub workflow: Arc<Workflow>,
    /// Required bearer token; open access when `None`.
    pub api_token: Option<String>,
}

impl AppState {
    pub fn new(workflow: Workflow) -> Self {
        AppState { workflow: Arc::new(workflow), api_token: None }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.api_token = token.filter(|t| !t.is_empty());
        self
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/tasks", post(create_task).get(list_tasks))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/annotation", post(submit_annotation))
        .route("/tasks/{id}/annotations", get(list_annotations))
        .route("/exports/{kind}", get(export))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/health", get(health));
    Router::new()
        .nest("/v1", api)
        .fallback(|| async { ApiError::NotFound })
        .layer(middleware::from_fn(access_log))
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.api_token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

async fn access_log(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let started = Instant::now();
    let response = next.run(req).await;
    tracing::info!(
        target: "access",
        method = %method,
        path = %path,
        status = response.status().as_u16(),
        latency_ms = started.elapsed().as_millis() as u64,
    );
    response
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::InvalidBody(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

#[derive(Deserialize)]
struct CreateTask {
    question: String,
    #[serde(default)]
    template_id: Option<String>,
}

async fn create_task(
    State(state): State<AppState>,
    payload: Result<Json<CreateTask>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(payload)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::EmptyQuestion);
    }
    let template = req.template_id.unwrap_or_else(|| DEFAULT_TEMPLATE.to_string());
    let workflow = state.workflow.clone();
    let task = blocking(move || workflow.create_task(&req.question, &template)).await?;
    Ok((StatusCode::CREATED, Json(task)).into_response())
}

#[derive(Deserialize)]
struct ListQuery {
    status: Option<String>,
}

async fn list_tasks(State(state): State<AppState>, Query(q): Query<ListQuery>) -> Result<Json<Value>, ApiError> {
    let status = q.status.map(|s| s.parse::<TaskStatus>()).transpose().map_err(ApiError::InvalidBody)?;
    let tasks = state.workflow.store.list_tasks(TaskFilter { status });
    Ok(Json(json!({ "tasks": tasks })))
}

async fn get_task(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.workflow.store.get_task(&id)?).into_response())
}

async fn list_annotations(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let versions = state.workflow.store.get_annotations(&id)?;
    let rows: Vec<Value> =
        versions.iter().map(|v| json!({ "version": v.version, "latest": v.latest, "record": v.record })).collect();
    Ok(Json(json!({ "annotations": rows })))
}

async fn submit_annotation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<Value>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let mut raw = body(payload)?;
    if let Some(obj) = raw.as_object_mut() {
        obj.entry("task_id").or_insert_with(|| Value::String(id.clone()));
    }
    let record: AnnotationRecord = serde_json::from_value(raw).map_err(|e| ApiError::InvalidBody(e.to_string()))?;
    let annotator_id = record.annotator_id.clone();
    let store = state.workflow.store.clone();
    let task_id = id.clone();
    let version = blocking(move || Ok(store.submit_annotation(&task_id, record)?)).await?;
    Ok(Json(json!({ "accepted": true, "task_id": id, "annotator_id": annotator_id, "version": version })))
}

async fn export(State(state): State<AppState>, Path(kind): Path<String>) -> Result<Response, ApiError> {
    let kind: ExportKind = kind.parse().map_err(|_| ApiError::UnknownKind(kind))?;
    let workflow = state.workflow.clone();
    let (text, entry) = blocking(move || {
        let items = workflow.store.export_snapshot();
        Ok(render_kind(kind, &items, &workflow.library, &workflow.export_options))
    })
    .await?;
    let mut response = Response::new(Body::from(text));
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/x-ndjson"));
    headers.insert("x-record-count", HeaderValue::from(entry.count));
    Ok(response)
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "offline": state.workflow.offline,
        "provider": state.workflow.gateway.provider_id(),
    }))
}
