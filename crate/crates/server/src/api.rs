//! HTTP surface. Handlers only enqueue requests or read published
//! snapshots; the loop does the work.

use axum::body::{Body, Bytes};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream;
use hearth_core::cues::Cue;
use hearth_core::executive::{ExecError, Mode};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::runner::{Control, Handle, Stopped};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandBody {
    pub text: String,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct EventsQuery {
    #[serde(default)]
    pub from: usize,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Conflict(String),
    Unavailable,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Unavailable => (StatusCode::SERVICE_UNAVAILABLE, "executive loop stopped".to_string()),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

impl From<ExecError> for ApiError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Busy(_) | ExecError::Finished => ApiError::Conflict(e.to_string()),
            ExecError::Plan(_) | ExecError::Cue(_) => ApiError::BadRequest(e.to_string()),
        }
    }
}

impl From<Stopped> for ApiError {
    fn from(_: Stopped) -> Self {
        ApiError::Unavailable
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

pub fn router(handle: Handle) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/command", post(post_command))
        .route("/cue", post(post_cue))
        .route("/control", post(post_control))
        .route("/events", get(get_events))
        .with_state(handle)
}

async fn get_state(State(h): State<Handle>) -> impl IntoResponse {
    Json(h.shared().state())
}

async fn post_command(
    State(h): State<Handle>,
    body: Result<Json<CommandBody>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body?;
    let task = h.command(body.text).await??;
    Ok((StatusCode::CREATED, Json(task)))
}

async fn post_cue(State(h): State<Handle>, body: Result<Json<Cue>, JsonRejection>) -> Result<impl IntoResponse, ApiError> {
    let Json(cue) = body?;
    let event = h.cue(cue).await??;
    Ok((StatusCode::ACCEPTED, Json(event)))
}

async fn post_control(
    State(h): State<Handle>,
    body: Result<Json<Control>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(control) = body?;
    Ok(Json(h.control(control).await?))
}

/// Streams log lines from `from`, then follows the log until the run
/// finishes.
async fn get_events(State(h): State<Handle>, query: Result<Query<EventsQuery>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(q) = query?;
    let rx = h.shared().subscribe();
    let lines = stream::unfold((h, rx, q.from), |(h, mut rx, offset)| async move {
        loop {
            let shared = h.shared();
            let fresh = shared.lines_from(offset);
            if !fresh.is_empty() {
                let next = offset + fresh.len();
                let mut chunk = fresh.join("\n");
                chunk.push('\n');
                return Some((Ok::<_, std::convert::Infallible>(Bytes::from(chunk)), (h, rx, next)));
            }
            if shared.state().mode == Mode::Finished && offset >= shared.len() {
                return None;
            }
            rx.changed().await.ok()?;
        }
    });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(lines)).into_response())
}
