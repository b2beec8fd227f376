//! HTTP front for a [`Study`]: serves tasks, takes votes, reports.
//!
//! | route                              | success            | errors                               |
//! |------------------------------------|--------------------|--------------------------------------|
//! | `GET /api/tasks/next?annotator=ID` | 200 task, 204 done | 400 no annotator, 422 empty one      |
//! | `POST /api/votes`                  | 201 vote           | 404 task, 409 duplicate, 422 invalid |
//! | `GET /api/report`                  | 200 report         |                                      |
//! | `GET /api/health`                  | 200 `ok`           |                                      |
//!
//! Anything else falls through to an optional static directory, which is
//! where the annotation front end is expected to live.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use factlens_core::study::{PublicTask, Study};
use factlens_core::Error;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

#[derive(Debug, Deserialize)]
pub struct NextParams {
    pub annotator: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VoteRequest {
    pub task_id: String,
    pub annotator: String,
    pub choice: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::UnknownTask(_) => StatusCode::NOT_FOUND,
            Error::DuplicateVote { .. } => StatusCode::CONFLICT,
            Error::InvalidChoice(_) | Error::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

pub fn router(study: Arc<Study>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/votes", post(post_vote))
        .route("/api/report", get(get_report))
        .route("/api/health", get(|| async { "ok" }))
        .with_state(study);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn next_task(State(study): State<Arc<Study>>, Query(params): Query<NextParams>) -> Response {
    if params.annotator.trim().is_empty() {
        return ApiError(Error::Invalid("annotator id must not be empty".into())).into_response();
    }
    match study.next_task(&params.annotator) {
        Some(task) => Json::<PublicTask>(task.public()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn post_vote(State(study): State<Arc<Study>>, Json(req): Json<VoteRequest>) -> Result<Response, ApiError> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    // The store flushes to disk under its append lock; keep that off the
    // async workers.
    let vote = tokio::task::spawn_blocking(move || study.record_vote(&req.task_id, &req.annotator, &req.choice, now))
        .await
        .map_err(|e| ApiError(Error::Precondition(format!("vote handler panicked: {e}"))))?
        .map_err(ApiError)?;
    Ok((StatusCode::CREATED, Json(vote)).into_response())
}

async fn get_report(State(study): State<Arc<Study>>) -> Response {
    Json(study.report()).into_response()
}

/// Bind and serve until Ctrl-C.
pub async fn serve(study: Arc<Study>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("study service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(study, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
