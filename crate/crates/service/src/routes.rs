use std::collections::BTreeMap;
use std::sync::atomic::Ordering;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::Json;
use serde::Deserialize;
use serde_json::json;

use chef_core::ChefError;

use crate::state::{AppState, View};

pub const ANNOTATOR_HEADER: &str = "x-annotator";
/// Annotator name used when the header is absent.
pub const DEFAULT_ANNOTATOR: &str = "ui";

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_ready(view: &View) -> Response {
    match view {
        View::Failed(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("initialization failed: {e}")),
        _ => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "initializing" }))).into_response(),
    }
}

pub async fn index() -> Html<&'static str> {
    Html(include_str!("../assets/index.html"))
}

pub async fn health() -> &'static str {
    "ok"
}

pub async fn session(State(state): State<AppState>) -> Response {
    let view = state.0.view.read().expect("view lock");
    match &*view {
        View::Live(s) => Json(s.clone()).into_response(),
        other => not_ready(other),
    }
}

pub async fn queue(State(state): State<AppState>) -> Response {
    let view = state.0.view.read().expect("view lock");
    match &*view {
        View::Live(s) => Json(json!({ "k": s.k, "pending": s.pending })).into_response(),
        other => not_ready(other),
    }
}

pub async fn metrics(State(state): State<AppState>) -> Response {
    let view = state.0.view.read().expect("view lock");
    match &*view {
        View::Live(s) => Json(json!({ "history": s.history })).into_response(),
        other => not_ready(other),
    }
}

pub async fn report(State(state): State<AppState>) -> Response {
    match state.report().await {
        Some(r) => Json(r).into_response(),
        None => not_ready(&state.0.view.read().expect("view lock")),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSubmission {
    pub sample_id: usize,
    /// 1-based.
    pub class: usize,
    /// Round the annotator was looking at; stale submissions get 409.
    #[serde(default)]
    pub round: Option<usize>,
}

pub async fn submit_label(State(state): State<AppState>, headers: HeaderMap, Json(body): Json<LabelSubmission>) -> Response {
    let annotator = headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .unwrap_or(DEFAULT_ANNOTATOR)
        .to_string();
    if state.is_advancing() {
        return error(StatusCode::CONFLICT, "round is being advanced");
    }
    let mut guard = state.0.inner.lock().await;
    let Some(inner) = guard.as_mut() else {
        return not_ready(&state.0.view.read().expect("view lock"));
    };
    let session = &inner.session;
    let pending = session.pending().is_some_and(|p| p.selection.items.iter().any(|s| s.id == body.sample_id));
    if !pending {
        return if session.was_selected(body.sample_id) || session.is_done() {
            error(StatusCode::CONFLICT, format!("sample {} belongs to a finished round", body.sample_id))
        } else {
            error(StatusCode::NOT_FOUND, format!("sample {} is not pending", body.sample_id))
        };
    }
    if body.round.is_some_and(|r| r != session.k()) {
        return error(StatusCode::CONFLICT, format!("round {} is no longer current", body.round.unwrap()));
    }
    let c = session.dataset().num_classes();
    if body.class == 0 || body.class > c {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("class must lie in 1..={c}"));
    }
    inner.labels.entry(body.sample_id).or_default().insert(annotator, body.class - 1);
    state.0.publish(View::Live(inner.snapshot(false)));
    StatusCode::NO_CONTENT.into_response()
}

/// Clears the advancing flag however the update ends.
struct AdvanceFlag(AppState);

impl Drop for AdvanceFlag {
    fn drop(&mut self) {
        self.0 .0.advancing.store(false, Ordering::SeqCst);
    }
}

pub async fn advance(State(state): State<AppState>) -> Response {
    if state.0.advancing.swap(true, Ordering::SeqCst) {
        return error(StatusCode::CONFLICT, "an advance is already running");
    }
    let flag = AdvanceFlag(state.clone());
    let mut guard = state.0.inner.clone().lock_owned().await;
    let Some(inner) = guard.as_mut() else {
        return not_ready(&state.0.view.read().expect("view lock"));
    };
    if inner.session.is_done() {
        return error(StatusCode::CONFLICT, "session has finished");
    }
    // one label per distinct annotator, in annotator-name order
    let need = inner.session.config().strategy.required_annotations();
    let mut annotations: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut missing = Vec::new();
    for id in inner.session.pending().map(|p| p.selection.ids()).unwrap_or_default() {
        let votes: Vec<usize> = inner.labels.get(&id).map(|m| m.values().copied().collect()).unwrap_or_default();
        if votes.len() < need {
            missing.push(id);
        }
        annotations.insert(id, votes);
    }
    if !missing.is_empty() {
        return (
            StatusCode::PRECONDITION_FAILED,
            Json(json!({ "error": "annotations incomplete", "required": need, "missing": missing })),
        )
            .into_response();
    }
    state.0.publish(View::Live(inner.snapshot(true)));

    let shared = state.0.clone();
    let task = tokio::task::spawn_blocking(move || {
        let _flag = flag;
        let inner = guard.as_mut().expect("session present");
        let result = inner.session.advance(&annotations).cloned();
        if result.is_ok() {
            inner.labels.clear();
        }
        shared.publish(View::Live(inner.snapshot(false)));
        result
    });
    match tokio::time::timeout(state.0.options.advance_timeout, task).await {
        Err(_) => error(StatusCode::GATEWAY_TIMEOUT, "model update still running; poll /api/session"),
        Ok(Err(join)) => error(StatusCode::INTERNAL_SERVER_ERROR, join.to_string()),
        Ok(Ok(Ok(report))) => Json(report).into_response(),
        Ok(Ok(Err(ChefError::IncompleteAnnotation(missing)))) => (
            StatusCode::PRECONDITION_FAILED,
            Json(json!({ "error": "annotations incomplete", "required": need, "missing": missing })),
        )
            .into_response(),
        Ok(Ok(Err(e @ ChefError::Argument(_)))) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Ok(Ok(Err(e))) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}
