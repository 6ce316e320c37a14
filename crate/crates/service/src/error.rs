use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pta_core::play::PlayError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no session `{0}`")]
    UnknownSession(String),
    #[error("no scenario named `{0}`")]
    UnknownScenario(String),
    #[error("{0}")]
    IllegalAction(String),
    #[error("the session is completed")]
    SessionCompleted,
    #[error("{0}")]
    BadRequest(String),
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

impl From<PlayError> for ServiceError {
    fn from(e: PlayError) -> Self {
        match e {
            PlayError::IllegalAction(m) => ServiceError::IllegalAction(m),
            PlayError::SessionCompleted => ServiceError::SessionCompleted,
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

/// Error body: `{"code": ..., "message": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownScenario(_) => "unknown_scenario",
            ServiceError::IllegalAction(_) => "illegal_action",
            ServiceError::SessionCompleted => "session_completed",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Storage(_) => "storage",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownScenario(_) => StatusCode::NOT_FOUND,
            ServiceError::IllegalAction(_) => StatusCode::CONFLICT,
            ServiceError::SessionCompleted => StatusCode::GONE,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Storage(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
