//! JSON review and report service over the same on-disk stores the command
//! line uses. Every request reads state from disk.

use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use stancebench::corpus::{self, CorpusSplit, InputFormat, LabeledPost, Stance};
use stancebench::eval::{self, EvalError};
use stancebench::gateway::ExperimentConfig;
use stancebench::postprocess::{IllFormatCategory, ReviewError, ReviewItem, ReviewStore, REVIEWS_FILE};
use stancebench::runner::{self, RunManifest, RunStore};

pub const SECRET_HEADER: &str = "x-review-secret";
const DEFAULT_PAGE: usize = 50;

pub struct AppState {
    config: ExperimentConfig,
    secret: Option<String>,
    /// Serializes mutations so a read-check-append is atomic.
    writer: Mutex<()>,
}

impl AppState {
    pub fn new(config: ExperimentConfig, secret: Option<String>) -> Arc<Self> {
        Arc::new(AppState {
            config,
            secret,
            writer: Mutex::new(()),
        })
    }

    fn runs(&self) -> Result<Vec<(RunStore, RunManifest)>, ApiError> {
        let stores = self.config.runs().map_err(ApiError::internal)?;
        stores
            .into_iter()
            .map(|s| {
                let m = s.manifest().map_err(ApiError::internal)?;
                Ok((s, m))
            })
            .collect()
    }

    fn run(&self, run_id: &str) -> Result<(RunStore, RunManifest), ApiError> {
        self.runs()?
            .into_iter()
            .find(|(_, m)| m.run_id == run_id)
            .ok_or_else(|| ApiError::not_found(format!("unknown run {run_id}")))
    }

    fn split(&self) -> Result<CorpusSplit, ApiError> {
        let path = &self.config.corpus_path;
        let rows = corpus::ingest(path, InputFormat::from_path(path)).map_err(ApiError::internal)?;
        corpus::stratified_split(&corpus::filter_unanimous(&rows), self.config.seed).map_err(ApiError::internal)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: String) -> Self {
        ApiError {
            status,
            body: json!({ "error": kind, "message": message }),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())
    }

    fn not_found(message: String) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }

    fn bad_request(message: String) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/review/queue", get(queue))
        .route("/review/{prompt_id}", post(resolve))
        .route("/runs", get(runs))
        .route("/runs/{run_id}/report", get(report))
        .route("/prompts/{prompt_id}", get(prompt))
        .route_layer(middleware::from_fn_with_state(Arc::clone(&state), require_secret))
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match ui_dir {
        Some(dir) => app.nest_service("/ui", tower_http::services::ServeDir::new(dir)),
        None => app,
    }
}

async fn require_secret(State(state): State<Arc<AppState>>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(secret) = &state.secret {
        let given = headers.get(SECRET_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(secret.as_str()) {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "Unauthorized",
                "missing or wrong secret".into(),
            )
            .into_response();
        }
    }
    next.run(req).await
}

#[derive(Debug, Deserialize)]
pub struct QueueQuery {
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
    run_id: Option<String>,
    model: Option<String>,
    category: Option<IllFormatCategory>,
}

#[derive(Debug, Serialize)]
pub struct QueueEntry {
    run_id: String,
    model: String,
    #[serde(flatten)]
    item: ReviewItem,
    test_post_id: Option<String>,
    test_post_text: Option<String>,
}

async fn queue(
    State(state): State<Arc<AppState>>,
    Query(q): Query<QueueQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let mut entries = Vec::new();
    let posts: std::collections::HashMap<String, LabeledPost> = match state.split() {
        Ok(split) => split.test.into_iter().map(|p| (p.post_id.clone(), p)).collect(),
        Err(_) => Default::default(),
    };
    for (store, manifest) in state.runs()? {
        if q.run_id.as_ref().is_some_and(|r| *r != manifest.run_id)
            || q.model.as_ref().is_some_and(|m| *m != manifest.model)
        {
            continue;
        }
        let reviews = ReviewStore::open(store.path(REVIEWS_FILE)).map_err(ApiError::internal)?;
        let open: Vec<&ReviewItem> = reviews
            .unresolved()
            .filter(|i| q.category.is_none_or(|c| i.suggested == c))
            .collect();
        if open.is_empty() {
            continue;
        }
        let prompts = store.prompts().map_err(ApiError::internal)?;
        for item in open {
            let test_post_id = prompts
                .iter()
                .find(|p| p.prompt_id == item.prompt_id)
                .map(|p| p.test_post_id.clone());
            let test_post_text = test_post_id
                .as_ref()
                .and_then(|id| posts.get(id))
                .map(|p| p.text.clone());
            entries.push(QueueEntry {
                run_id: manifest.run_id.clone(),
                model: manifest.model.clone(),
                item: item.clone(),
                test_post_id,
                test_post_text,
            });
        }
    }
    let total = entries.len();
    let limit = q.limit.unwrap_or(DEFAULT_PAGE);
    let page: Vec<QueueEntry> = entries.into_iter().skip(q.offset).take(limit).collect();
    Ok(Json(
        json!({ "total": total, "offset": q.offset, "limit": limit, "items": page }),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolveBody {
    label: String,
    #[serde(default)]
    category: Option<String>,
    reviewer: String,
    #[serde(default)]
    run_id: Option<String>,
}

async fn resolve(
    State(state): State<Arc<AppState>>,
    UrlPath(prompt_id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<ReviewItem>, ApiError> {
    let body: ResolveBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))?;
    let label: Stance = body
        .label
        .parse()
        .map_err(|_| ApiError::bad_request(format!("invalid label {:?}", body.label)))?;
    let category = body
        .category
        .as_deref()
        .map(str::parse::<IllFormatCategory>)
        .transpose()
        .map_err(ApiError::bad_request)?;
    if body.reviewer.trim().is_empty() {
        return Err(ApiError::bad_request("reviewer must not be empty".into()));
    }

    let _guard = state.writer.lock().map_err(ApiError::internal)?;
    let mut holders = Vec::new();
    for (store, manifest) in state.runs()? {
        if body.run_id.as_ref().is_some_and(|r| *r != manifest.run_id) {
            continue;
        }
        let reviews = ReviewStore::open(store.path(REVIEWS_FILE)).map_err(ApiError::internal)?;
        if reviews.get(&prompt_id).is_some() {
            holders.push(reviews);
        }
    }
    let mut reviews = match holders.len() {
        0 => return Err(ApiError::not_found(format!("no review item for {prompt_id}"))),
        1 => holders.pop().expect("one holder"),
        _ => {
            return Err(ApiError::bad_request(format!(
                "{prompt_id} is queued in several runs; pass run_id"
            )))
        }
    };
    let category = category.unwrap_or_else(|| reviews.get(&prompt_id).expect("present").category());
    match reviews.resolve(&prompt_id, label, category, body.reviewer.trim()) {
        Ok(item) => Ok(Json(item)),
        Err(e @ ReviewError::AlreadyResolved { .. }) => {
            let mut err = ApiError::new(StatusCode::CONFLICT, "AlreadyResolved", e.to_string());
            err.body["item"] = serde_json::to_value(reviews.get(&prompt_id)).map_err(ApiError::internal)?;
            Err(err)
        }
        Err(ReviewError::NotFound(id)) => Err(ApiError::not_found(format!("no review item for {id}"))),
        Err(e) => Err(ApiError::internal(e)),
    }
}

async fn runs(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let mut out = Vec::new();
    for (store, manifest) in state.runs()? {
        let status = runner::status(store.dir()).map_err(ApiError::internal)?;
        let reviews = ReviewStore::open(store.path(REVIEWS_FILE)).map_err(ApiError::internal)?;
        out.push(json!({
            "run_id": manifest.run_id,
            "model": manifest.model,
            "counter_kind": manifest.counter_kind,
            "prompt_set_hash": manifest.prompt_set_hash,
            "created": manifest.created,
            "completed": status.completed.len(),
            "failed": status.failed.len(),
            "pending": status.pending.len(),
            "reviews_total": reviews.items().len(),
            "reviews_open": reviews.unresolved().count(),
        }));
    }
    Ok(Json(json!(out)))
}

async fn report(State(state): State<Arc<AppState>>, UrlPath(run_id): UrlPath<String>) -> Result<Response, ApiError> {
    let (store, _) = state.run(&run_id)?;
    let split = state.split()?;
    match eval::evaluate_run(store.dir(), &split, state.config.support_threshold) {
        Ok(table) => Ok(Json(table).into_response()),
        Err(EvalError::UnresolvedReview(ids)) => {
            let mut err = ApiError::new(
                StatusCode::CONFLICT,
                "UnresolvedReview",
                format!("{} review item(s) unresolved", ids.len()),
            );
            err.body["prompt_ids"] = json!(ids);
            Err(err)
        }
        Err(e) => Err(ApiError::internal(e)),
    }
}

#[derive(Debug, Deserialize)]
pub struct PromptQuery {
    run_id: Option<String>,
}

async fn prompt(
    State(state): State<Arc<AppState>>,
    UrlPath(prompt_id): UrlPath<String>,
    Query(q): Query<PromptQuery>,
) -> Result<Response, ApiError> {
    for (store, manifest) in state.runs()? {
        if q.run_id.as_ref().is_some_and(|r| *r != manifest.run_id) {
            continue;
        }
        let prompts = store.prompts().map_err(ApiError::internal)?;
        if let Some(p) = prompts.into_iter().find(|p| p.prompt_id == prompt_id) {
            let mut body = serde_json::to_value(&p).map_err(ApiError::internal)?;
            body["run_id"] = json!(manifest.run_id);
            return Ok(Json(body).into_response());
        }
    }
    Err(ApiError::not_found(format!("unknown prompt {prompt_id}")))
}
