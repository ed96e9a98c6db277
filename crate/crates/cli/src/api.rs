use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fastdata::ingest::{infer_csv_schema, infer_json_lines_schema, ColumnType};
use fastdata::query::Mode;
use fastdata::{Error, QuerySpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::registry::{QueryState, Registry};

const SCHEMA_SAMPLE_ROWS: usize = 1000;
const DATASET_EXTENSIONS: [&str; 3] = ["csv", "jsonl", "ndjson"];

/// JSON error body `{error, detail}` plus optional extra fields.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: &'static str,
    detail: String,
    extra: Option<(&'static str, Value)>,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            error,
            detail: detail.into(),
            extra: None,
        }
    }

    fn with(mut self, key: &'static str, value: Value) -> Self {
        self.extra = Some((key, value));
        self
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not found", format!("no {what} {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.error, "detail": self.detail });
        if let Some((k, v)) = self.extra {
            body[k] = v;
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/queries", post(submit))
        .route("/api/queries/{id}", get(status).delete(cancel))
        .route("/api/queries/{id}/report", get(report))
        .route("/api/queries/{id}/emit", post(emit))
        .route("/api/datasets", get(list_datasets))
        .route("/api/datasets/{id}/schema", get(schema))
        .with_state(registry)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

/// File sources must name a file inside the data directory.
fn confined(path: &Path) -> bool {
    !path.as_os_str().is_empty() && path.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn parse_spec(body: &str) -> ApiResult<QuerySpec> {
    let spec: QuerySpec = serde_json::from_str(body).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid query spec", e.to_string())
            .with("fields", json!([e.to_string()]))
    })?;
    if let Some(p) = spec.source.path() {
        if !confined(p) {
            let msg = format!("source.path must be relative to the data directory, got {}", p.display());
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid query spec", msg.clone())
                .with("fields", json!([msg])));
        }
    }
    spec.validate().map_err(|e| match e {
        Error::InvalidSpec(fields) => {
            ApiError::new(StatusCode::BAD_REQUEST, "invalid query spec", fields.join("; ")).with("fields", json!(fields))
        }
        other => ApiError::new(StatusCode::BAD_REQUEST, "invalid query spec", other.to_string()),
    })
}

async fn submit(State(reg): State<Arc<Registry>>, body: String) -> ApiResult<Json<Value>> {
    let spec = parse_spec(&body)?;
    let h = reg.submit(spec);
    Ok(Json(json!({ "queryId": h.id() })))
}

async fn status(State(reg): State<Arc<Registry>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let h = reg.get(&id).ok_or_else(|| ApiError::not_found("query", &id))?;
    Ok(Json(h.status()).into_response())
}

async fn cancel(State(reg): State<Arc<Registry>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let h = reg.get(&id).ok_or_else(|| ApiError::not_found("query", &id))?;
    h.cancel();
    Ok(Json(h.status()).into_response())
}

async fn report(State(reg): State<Arc<Registry>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let h = reg.get(&id).ok_or_else(|| ApiError::not_found("query", &id))?;
    let (state, latest) = h.latest();
    match (state, latest) {
        (QueryState::Running, Some(r)) if h.mode() == Mode::Streaming => Ok(Json(r.as_ref().clone()).into_response()),
        (QueryState::Done | QueryState::Cancelled, Some(r)) => Ok(Json(r.as_ref().clone()).into_response()),
        (QueryState::Failed, _) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "query failed",
            h.status().error.unwrap_or_default(),
        )
        .with("state", json!(state))),
        (state, _) => Err(ApiError::new(StatusCode::CONFLICT, "report not ready", format!("query {id} has no report yet"))
            .with("state", json!(state))),
    }
}

async fn emit(State(reg): State<Arc<Registry>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let h = reg.get(&id).ok_or_else(|| ApiError::not_found("query", &id))?;
    if h.mode() != Mode::Streaming {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "not a streaming query",
            "one-shot queries produce a single report",
        ));
    }
    if let Some(rx) = h.request_emit() {
        if let Ok(r) = rx.await {
            return Ok(Json(r.as_ref().clone()).into_response());
        }
    }
    match h.latest() {
        (_, Some(r)) => Ok(Json(r.as_ref().clone()).into_response()),
        (state, None) => Err(ApiError::new(StatusCode::CONFLICT, "no emission available", format!("query {id} is {state:?}"))
            .with("state", json!(state))),
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Column {
    name: String,
    #[serde(rename = "type")]
    kind: ColumnType,
}

/// Data-directory files with a supported extension, by file stem.
fn datasets(dir: &Path) -> BTreeMap<String, PathBuf> {
    let mut out = BTreeMap::new();
    let Ok(entries) = std::fs::read_dir(dir) else { return out };
    let mut paths: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
    paths.sort();
    for path in paths {
        let ext = path.extension().and_then(|x| x.to_str()).unwrap_or("");
        if path.is_file() && DATASET_EXTENSIONS.contains(&ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.entry(stem.to_string()).or_insert(path);
            }
        }
    }
    out
}

async fn list_datasets(State(reg): State<Arc<Registry>>) -> Json<Value> {
    let dir = reg.data_dir();
    let list: Vec<Value> = datasets(dir)
        .into_iter()
        .map(|(id, p)| json!({ "id": id, "path": p.strip_prefix(dir).unwrap_or(&p) }))
        .collect();
    Json(json!({ "datasets": list }))
}

async fn schema(State(reg): State<Arc<Registry>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let dir = reg.data_dir();
    let path = datasets(dir).remove(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    let inferred = if path.extension().is_some_and(|e| e == "csv") {
        infer_csv_schema(&path, SCHEMA_SAMPLE_ROWS)
    } else {
        infer_json_lines_schema(&path, SCHEMA_SAMPLE_ROWS)
    }
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unreadable dataset", e.to_string()))?;
    let columns: Vec<Column> = inferred.into_iter().map(|(name, kind)| Column { name, kind }).collect();
    Ok(Json(json!({
        "datasetId": id,
        "path": path.strip_prefix(dir).unwrap_or(&path),
        "columns": columns,
    }))
    .into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_confinement() {
        assert!(confined(Path::new("sample.csv")));
        assert!(confined(Path::new("./sub/sample.csv")));
        assert!(!confined(Path::new("../etc/passwd")));
        assert!(!confined(Path::new("/etc/passwd")));
        assert!(!confined(Path::new("")));
    }
}
