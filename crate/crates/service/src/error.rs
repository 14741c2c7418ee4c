use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use meshannot_core::mesh::MeshError;
use meshannot_core::session::SessionError;
use serde::{Deserialize, Serialize};

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn timeout() -> Self {
        Self::new(StatusCode::GATEWAY_TIMEOUT, "timeout", "solver did not finish in time")
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::UnknownSegment(_) => Self::not_found("unknown_segment", message),
            SessionError::UnknownClass(_) | SessionError::ClassNotAllowed { .. } => {
                Self::bad_request("invalid_class", message)
            }
            SessionError::UnknownFace(_) => Self::bad_request("unknown_face", message),
            SessionError::EmptyStack(_) => Self::bad_request("empty_stack", message),
            SessionError::InvalidPayload(_) => Self::bad_request("invalid_payload", message),
            SessionError::Mesh(MeshError::Io(_)) => Self::internal(message),
            SessionError::Mesh(_) => Self::bad_request("mesh", message),
            SessionError::Face(_) => Self::bad_request("face", message),
            SessionError::Texture(_) => Self::bad_request("texture", message),
            SessionError::Segmentation(_) => Self::bad_request("segmentation", message),
            SessionError::Geometry(_) => Self::internal(message),
        }
    }
}

impl From<MeshError> for ApiError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Io(_) => Self::internal(e.to_string()),
            MeshError::MissingFile(_) => Self::bad_request("missing_file", e.to_string()),
            _ => Self::bad_request("mesh", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!(code = self.code, "{}", self.message);
        }
        (self.status, Json(ErrorBody { code: self.code.to_string(), message: self.message })).into_response()
    }
}
