use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use phaseforge_core::consensus::ConsensusError;
use phaseforge_core::evaluation::EvalError;
use phaseforge_core::formats::FormatError;
use phaseforge_core::store::StoreError;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{message}")]
    Conflict { message: String, detail: Value },
    #[error("{message}")]
    Unprocessable { message: String, detail: Value },
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn conflict(message: impl Into<String>, detail: Value) -> Self {
        Self::Conflict { message: message.into(), detail }
    }

    pub fn unprocessable(message: impl Into<String>, detail: Value) -> Self {
        Self::Unprocessable { message: message.into(), detail }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Conflict { .. } => StatusCode::CONFLICT,
            Self::Unprocessable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::Unauthorized => StatusCode::UNAUTHORIZED,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(what) => Self::NotFound(format!("{what} not found")),
            StoreError::Exists(what) => Self::conflict(format!("{what} already exists"), Value::Null),
            StoreError::InvalidId(_) => Self::BadRequest(e.to_string()),
            StoreError::Format(f) => f.into(),
            StoreError::Json(_) | StoreError::Io(_) => Self::Internal(e.to_string()),
        }
    }
}

impl From<FormatError> for ApiError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(_) => Self::Internal(e.to_string()),
            FormatError::Label(_) | FormatError::Eval(_) => Self::unprocessable(e.to_string(), Value::Null),
            _ => Self::BadRequest(e.to_string()),
        }
    }
}

impl From<ConsensusError> for ApiError {
    fn from(e: ConsensusError) -> Self {
        Self::unprocessable(e.to_string(), Value::Null)
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        Self::unprocessable(e.to_string(), Value::Null)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let detail = match &self {
            Self::Conflict { detail, .. } | Self::Unprocessable { detail, .. } => detail.clone(),
            _ => Value::Null,
        };
        let mut body = json!({ "error": self.to_string() });
        if !detail.is_null() {
            body["detail"] = detail;
        }
        (status, Json(body)).into_response()
    }
}
