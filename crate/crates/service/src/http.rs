//! JSON-over-HTTP API. Every route except `/config` needs a bearer token;
//! annotator routes act on the token's annotator, and the admin token may
//! read any annotator's state via `?annotator=ID` and export the log.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{FromRequestParts, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::service::{AnnotationService, Identity};

type AppState = Arc<AnnotationService>;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Unauthorized(_) => StatusCode::UNAUTHORIZED,
            ServiceError::Ownership(_) => StatusCode::FORBIDDEN,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Storage(_) | ServiceError::Replay(_) | ServiceError::Setup(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        (
            status,
            Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response()
    }
}

struct Caller(Identity);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| ServiceError::Unauthorized("missing bearer token".into()))?;
        state.identify(token.trim()).map(Caller)
    }
}

#[derive(Debug, Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
}

#[derive(Debug, Deserialize)]
struct TopicQuery {
    annotator: Option<String>,
    topic: String,
}

/// The annotator a read request acts on.
fn subject(caller: &Identity, requested: Option<&str>) -> Result<String, ServiceError> {
    match (caller, requested) {
        (Identity::Annotator(me), None) => Ok(me.clone()),
        (Identity::Annotator(me), Some(a)) if a == me => Ok(me.clone()),
        (Identity::Annotator(_), Some(_)) => Err(ServiceError::Ownership(
            "token does not belong to the requested annotator".into(),
        )),
        (Identity::Admin, Some(a)) => Ok(a.to_string()),
        (Identity::Admin, None) => Err(ServiceError::Validation("admin requests need ?annotator=ID".into())),
    }
}

/// The annotator a write request acts on; admins cannot submit.
fn author(caller: &Identity, claimed: Option<&str>) -> Result<String, ServiceError> {
    match caller {
        Identity::Admin => Err(ServiceError::Ownership(
            "the admin identity cannot submit annotations".into(),
        )),
        Identity::Annotator(_) => subject(caller, claimed),
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(std::io::Error::other(e.to_string())))?
}

async fn config(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.public_config())
}

async fn topics(State(s): State<AppState>, Caller(c): Caller, Query(q): Query<AnnotatorQuery>) -> Response {
    let result = subject(&c, q.annotator.as_deref()).and_then(|a| s.topics(&a));
    respond(result)
}

async fn next_task(State(s): State<AppState>, Caller(c): Caller, Query(q): Query<AnnotatorQuery>) -> Response {
    respond(subject(&c, q.annotator.as_deref()).and_then(|a| s.next_task(&a)))
}

async fn progress(State(s): State<AppState>, Caller(c): Caller, Query(q): Query<AnnotatorQuery>) -> Response {
    respond(subject(&c, q.annotator.as_deref()).and_then(|a| s.progress(&a)))
}

async fn get_narrative(State(s): State<AppState>, Caller(c): Caller, Query(q): Query<TopicQuery>) -> Response {
    respond(subject(&c, q.annotator.as_deref()).and_then(|a| s.narrative(&a, &q.topic)))
}

#[derive(Debug, Deserialize)]
struct JudgmentBody {
    annotator: Option<String>,
    topic: String,
    doc: String,
    grade: i64,
}

async fn post_judgment(State(s): State<AppState>, Caller(c): Caller, Json(b): Json<JudgmentBody>) -> Response {
    let result = match author(&c, b.annotator.as_deref()) {
        Ok(a) => blocking(move || s.submit_judgment(&a, &b.topic, &b.doc, b.grade)).await,
        Err(e) => Err(e),
    };
    respond(result)
}

#[derive(Debug, Deserialize)]
struct NarrativeBody {
    annotator: Option<String>,
    topic: String,
    narrative_text: String,
}

async fn post_narrative(State(s): State<AppState>, Caller(c): Caller, Json(b): Json<NarrativeBody>) -> Response {
    let result = match author(&c, b.annotator.as_deref()) {
        Ok(a) => blocking(move || s.submit_narrative(&a, &b.topic, &b.narrative_text)).await,
        Err(e) => Err(e),
    };
    respond(result)
}

#[derive(Debug, Deserialize)]
struct FlagBody {
    annotator: Option<String>,
    topic: String,
    doc: Option<String>,
    note: String,
}

async fn post_flag(State(s): State<AppState>, Caller(c): Caller, Json(b): Json<FlagBody>) -> Response {
    let result = match author(&c, b.annotator.as_deref()) {
        Ok(a) => blocking(move || s.submit_flag(&a, &b.topic, b.doc.as_deref(), &b.note)).await,
        Err(e) => Err(e),
    };
    respond(result)
}

/// Admin only. With `?annotator=ID`, that annotator's qrels as plain text;
/// otherwise a JSON dump of every annotator's qrels plus narratives and flags.
async fn export(State(s): State<AppState>, Caller(c): Caller, Query(q): Query<AnnotatorQuery>) -> Response {
    if c != Identity::Admin {
        return ServiceError::Ownership("export requires the admin identity".into()).into_response();
    }
    let result = blocking(move || {
        let qrels = s.export_qrels()?;
        let folded = s.export_annotations()?;
        Ok((qrels, folded))
    })
    .await;
    match (result, q.annotator) {
        (Err(e), _) => e.into_response(),
        (Ok((qrels, _)), Some(a)) => match qrels.get(&a) {
            Some(text) => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text.clone()).into_response(),
            None => ServiceError::NotFound(format!("no judgments from {a}")).into_response(),
        },
        (Ok((qrels, folded)), None) => Json(serde_json::json!({
            "qrels": qrels,
            "narratives": folded.narratives,
            "flags": folded.flags,
        }))
        .into_response(),
    }
}

fn respond<T: Serialize>(result: Result<T, ServiceError>) -> Response {
    match result {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

pub fn router(service: Arc<AnnotationService>) -> Router {
    Router::new()
        .route("/config", get(config))
        .route("/topics", get(topics))
        .route("/task/next", get(next_task))
        .route("/progress", get(progress))
        .route("/narrative", get(get_narrative).post(post_narrative))
        .route("/judgment", post(post_judgment))
        .route("/flag", post(post_flag))
        .route("/export/qrels", get(export))
        .with_state(service)
}

/// Serves until interrupted.
pub async fn serve(addr: SocketAddr, service: Arc<AnnotationService>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
