//! HTTP JSON API over an [`Engine`].

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::engine::{AskRequest, Engine};
use crate::error::Error;
use crate::generation::AnswerMode;
use crate::kg::{Depth, ReviewFlags, ReviewStatus};
use crate::retrieval::RetrievalParams;

const ALLOWED_MODES: [&str; 3] = ["llm_only", "rag", "kgrag"];

const FALLBACK_INDEX: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>kgrag</title></head>
<body>
<h1>kgrag tutoring service</h1>
<p>No UI bundle configured. Start the server with <code>--ui-dir</code> to serve one.</p>
<p>API: <code>POST /api/ask</code>, <code>GET /api/graph/neighborhood</code>, <code>GET /api/health</code>.</p>
</body></html>
"#;

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
    ui_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": "bad_request", "message": message.into() }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::InvalidRequest(_) | Error::UnknownProvider { .. } | Error::Encoding { .. } => {
                (StatusCode::BAD_REQUEST, "bad_request")
            }
            Error::Ingest { .. } => (StatusCode::BAD_REQUEST, "ingest_failed"),
            Error::UnknownNode(_) | Error::TripleNotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::GraphNotBuilt => (StatusCode::CONFLICT, "graph_not_built"),
            Error::InvalidTransition { .. } => (StatusCode::CONFLICT, "invalid_transition"),
            Error::Provider { .. } | Error::ExtractionFailed { .. } => {
                (StatusCode::BAD_GATEWAY, "provider_failed")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            body: json!({ "error": code, "message": e.to_string() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(engine: Arc<Engine>, f: F) -> Result<T, ApiError>
where
    F: FnOnce(&Engine) -> crate::error::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::from(Error::Io(std::io::Error::other(e.to_string()))))?
        .map_err(ApiError::from)
}

fn parse_body(body: &Bytes) -> Result<Value, ApiError> {
    if body.is_empty() {
        return Ok(json!({}));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn field<'a>(body: &'a Value, name: &str) -> Result<Option<&'a Value>, ApiError> {
    match body {
        Value::Object(map) => Ok(map.get(name).filter(|v| !v.is_null())),
        _ => Err(ApiError::bad_request("request body must be a JSON object")),
    }
}

fn string_field(body: &Value, name: &str) -> Result<Option<String>, ApiError> {
    match field(body, name)? {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ApiError::bad_request(format!("`{name}` must be a string"))),
    }
}

fn bool_field(body: &Value, name: &str) -> Result<Option<bool>, ApiError> {
    match field(body, name)? {
        None => Ok(None),
        Some(Value::Bool(b)) => Ok(Some(*b)),
        Some(_) => Err(ApiError::bad_request(format!("`{name}` must be a boolean"))),
    }
}

fn parse_mode(raw: Option<String>) -> Result<AnswerMode, ApiError> {
    let Some(raw) = raw else {
        return Ok(AnswerMode::Kgrag);
    };
    raw.parse().map_err(|_| ApiError {
        status: StatusCode::BAD_REQUEST,
        body: json!({
            "error": "unknown_mode",
            "message": format!("unknown mode `{raw}`"),
            "allowed_modes": ALLOWED_MODES,
        }),
    })
}

async fn ask(State(state): State<AppState>, body: Bytes) -> ApiResult<Value> {
    let body = parse_body(&body)?;
    let query = string_field(&body, "query")?.unwrap_or_default();
    if query.trim().is_empty() {
        return Err(ApiError::bad_request("`query` must be a non-empty string"));
    }
    let request = AskRequest {
        session_id: string_field(&body, "session_id")?.unwrap_or_default(),
        query,
        mode: parse_mode(string_field(&body, "mode")?)?,
        use_cache: bool_field(&body, "use_cache")?.unwrap_or(true),
    };
    let response = blocking(state.engine, move |e| e.ask(&request)).await?;
    Ok(Json(serde_json::to_value(response).expect("serializable")))
}

#[derive(Deserialize)]
struct RetrieveBody {
    query: String,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    depth: Option<Depth>,
}

async fn retrieve(State(state): State<AppState>, body: Bytes) -> ApiResult<Value> {
    let body: RetrieveBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid retrieve request: {e}")))?;
    let mut params: RetrievalParams = state.engine.settings().retrieval;
    if let Some(k) = body.k {
        params.k = k;
    }
    if let Some(depth) = body.depth {
        params.depth = depth;
    }
    let out = blocking(state.engine, move |e| e.retrieve(&body.query, Some(&params))).await?;
    Ok(Json(serde_json::to_value(out).expect("serializable")))
}

#[derive(Deserialize)]
struct NeighborhoodQuery {
    entity: Option<String>,
    depth: Option<String>,
}

async fn neighborhood(State(state): State<AppState>, Query(q): Query<NeighborhoodQuery>) -> ApiResult<Value> {
    let entity = q
        .entity
        .filter(|e| !e.trim().is_empty())
        .ok_or_else(|| ApiError::bad_request("`entity` query parameter is required"))?;
    let depth = match q.depth {
        None => Depth::Hops(1),
        Some(d) => d.parse::<Depth>().map_err(ApiError::bad_request)?,
    };
    let graph = state.engine.neighborhood(&entity, depth)?;
    Ok(Json(serde_json::to_value(graph).expect("serializable")))
}

async fn graph_export(State(state): State<AppState>) -> ApiResult<Value> {
    let graph = state.engine.graph().ok_or(Error::GraphNotBuilt)?;
    Ok(Json(serde_json::to_value(graph.to_json()).expect("serializable")))
}

async fn ingest(State(state): State<AppState>, body: Bytes) -> ApiResult<Value> {
    let body = parse_body(&body)?;
    let path = string_field(&body, "path")?;
    let doc_id = string_field(&body, "doc_id")?;
    let text = string_field(&body, "text")?;
    let report = match (path, doc_id, text) {
        (Some(path), None, None) => blocking(state.engine, move |e| e.ingest_path(Path::new(&path))).await?,
        (None, Some(doc_id), Some(text)) => {
            blocking(state.engine, move |e| e.ingest_text(&doc_id, &text)).await?
        }
        _ => return Err(ApiError::bad_request("send either `path` or both `doc_id` and `text`")),
    };
    Ok(Json(serde_json::to_value(report).expect("serializable")))
}

async fn extract(State(state): State<AppState>) -> ApiResult<Value> {
    let report = blocking(state.engine, |e| e.extract()).await?;
    Ok(Json(serde_json::to_value(report).expect("serializable")))
}

async fn build(State(state): State<AppState>) -> ApiResult<Value> {
    let report = blocking(state.engine, |e| e.build_graph()).await?;
    Ok(Json(serde_json::to_value(report).expect("serializable")))
}

async fn triples(State(state): State<AppState>) -> ApiResult<Value> {
    let list: Vec<Value> = state
        .engine
        .triples()
        .into_iter()
        .enumerate()
        .map(|(id, t)| {
            let mut v = serde_json::to_value(t).expect("serializable");
            v["triple_id"] = json!(id);
            v
        })
        .collect();
    Ok(Json(json!({ "triples": list })))
}

#[derive(Deserialize)]
struct ReviewBody {
    triple_id: usize,
    status: String,
    #[serde(default)]
    flags: ReviewFlags,
}

async fn review(State(state): State<AppState>, body: Bytes) -> ApiResult<Value> {
    let body: ReviewBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid review request: {e}")))?;
    let status: ReviewStatus = body.status.parse().map_err(ApiError::bad_request)?;
    if status == ReviewStatus::Pending {
        return Err(ApiError::bad_request("status must be `approved` or `rejected`"));
    }
    let id = body.triple_id;
    let triple = blocking(state.engine, move |e| e.review(id, status, body.flags)).await?;
    let mut v = serde_json::to_value(triple).expect("serializable");
    v["triple_id"] = json!(id);
    Ok(Json(v))
}

async fn flush_cache(State(state): State<AppState>) -> ApiResult<Value> {
    let dropped = blocking(state.engine, |e| e.flush_cache()).await?;
    Ok(Json(json!({ "flushed": dropped })))
}

#[derive(Deserialize)]
struct CostQuery {
    provider: String,
    #[serde(default = "one")]
    n: u64,
    #[serde(default)]
    hit_rate: f64,
}

fn one() -> u64 {
    1
}

async fn cost(State(state): State<AppState>, Query(q): Query<CostQuery>) -> ApiResult<Value> {
    let costs = state.engine.costs();
    let usd = costs.estimate_cost(&q.provider, q.n, q.hit_rate)?;
    let ratio = costs.cost_ratio(&q.provider, crate::cost::BASELINE_PROVIDER).ok();
    Ok(Json(json!({
        "provider": q.provider,
        "n_queries": q.n,
        "cache_hit_rate": q.hit_rate,
        "cost_usd": usd,
        "ratio_vs_baseline": ratio,
    })))
}

async fn health(State(state): State<AppState>) -> ApiResult<Value> {
    Ok(Json(serde_json::to_value(state.engine.health()).expect("serializable")))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<AppState>, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(root) = state.ui_dir else {
        return if rel == "index.html" {
            Html(FALLBACK_INDEX).into_response()
        } else {
            StatusCode::NOT_FOUND.into_response()
        };
    };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(engine: Arc<Engine>, ui_dir: Option<PathBuf>) -> Router {
    Router::new()
        .route("/api/ask", post(ask))
        .route("/api/retrieve", post(retrieve))
        .route("/api/health", get(health))
        .route("/api/graph", get(graph_export))
        .route("/api/graph/neighborhood", get(neighborhood))
        .route("/api/graph/build", post(build))
        .route("/api/ingest", post(ingest))
        .route("/api/extract", post(extract))
        .route("/api/triples", get(triples))
        .route("/api/triples/review", post(review))
        .route("/api/cache/flush", post(flush_cache))
        .route("/api/cost", get(cost))
        .fallback(get(static_file))
        .with_state(AppState { engine, ui_dir })
}

pub async fn serve(engine: Arc<Engine>, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(engine, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
