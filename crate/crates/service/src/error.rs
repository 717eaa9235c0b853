use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

/// Error body: `{code, message, details}`.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{message}")]
    Invalid { message: String, details: Value },
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    NoModel(String),
    #[error("{message}")]
    AssessmentFailed { message: String, details: Value },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn invalid(message: impl Into<String>) -> Self {
        ApiError::Invalid { message: message.into(), details: Value::Null }
    }

    fn parts(&self) -> (StatusCode, &'static str, Value) {
        match self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", Value::Null),
            ApiError::Invalid { details, .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", details.clone()),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict", Value::Null),
            ApiError::NoModel(_) => (StatusCode::CONFLICT, "no_model", Value::Null),
            ApiError::AssessmentFailed { details, .. } => {
                (StatusCode::PRECONDITION_FAILED, "assessment_failed", details.clone())
            }
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", Value::Null),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, details) = self.parts();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(ErrorBody { code, message: self.to_string(), details })).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
