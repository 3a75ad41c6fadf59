use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use threadreq_core::error::{ClusterError, PrioritizeError};
use threadreq_core::project::ProjectError;
use threadreq_core::store::StoreError;

/// Error body shared by every endpoint: `{code, message, details[]}`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code, message: message.into(), details: Vec::new() } }
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.body.details = details;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_error", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let message = e.to_string();
        match e {
            ProjectError::Validation(_) | ProjectError::Config(_) => ApiError::validation(message),
            ProjectError::NotFound { .. } => ApiError::not_found(message),
            ProjectError::Conflict { expected, current } => {
                ApiError::new(StatusCode::CONFLICT, "revision_conflict", message)
                    .with_details(vec![format!("expected={expected}"), format!("current={current}")])
            }
            ProjectError::StaleState(_) => ApiError::new(StatusCode::CONFLICT, "stale_state", message),
            ProjectError::MissingRatings(cells) => {
                ApiError::new(StatusCode::CONFLICT, "missing_ratings", message).with_details(cells)
            }
            ProjectError::Prioritize(PrioritizeError::UndecidedFeasibility(ids)) => {
                ApiError::new(StatusCode::CONFLICT, "undecided_feasibility", message).with_details(ids)
            }
            ProjectError::Prioritize(_) => ApiError::validation(message),
            ProjectError::Cluster(ClusterError::EmptyTopic | ClusterError::EmptyVocabulary) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "clustering_error", message)
            }
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        log::error!("project save failed: {e}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
    }
}
