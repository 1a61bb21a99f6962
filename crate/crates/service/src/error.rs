use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use stepverify_core::annotation::ValidationError;
use stepverify_core::gateway::GatewayError;
use stepverify_core::parser::ParseError;
use stepverify_core::store::StoreError;

/// Every failure the API reports. The variant name is the `code` field of
/// the JSON error body.
#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    EmptyQuestion,
    UnknownTemplate(String),
    InvalidBody(String),
    Unauthorized,
    UnknownTask(String),
    UnknownKind(String),
    NotFound,
    ValidationFailed(Vec<ValidationError>),
    NoStepsFound,
    DanglingSubQuestion(usize),
    ProviderUnavailable(String),
    FixtureMiss(String),
    RateLimited { retry_after_ms: u64 },
    StorageFailure(String),
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        use ApiError::*;
        match self {
            EmptyQuestion => "EmptyQuestion",
            UnknownTemplate(_) => "UnknownTemplate",
            InvalidBody(_) => "InvalidBody",
            Unauthorized => "Unauthorized",
            UnknownTask(_) => "UnknownTask",
            UnknownKind(_) => "UnknownKind",
            NotFound => "NotFound",
            ValidationFailed(_) => "ValidationFailed",
            NoStepsFound => "NoStepsFound",
            DanglingSubQuestion(_) => "DanglingSubQuestion",
            ProviderUnavailable(_) => "ProviderUnavailable",
            FixtureMiss(_) => "FixtureMiss",
            RateLimited { .. } => "RateLimited",
            StorageFailure(_) => "StorageFailure",
            Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        use ApiError::*;
        match self {
            EmptyQuestion | UnknownTemplate(_) | InvalidBody(_) => StatusCode::BAD_REQUEST,
            Unauthorized => StatusCode::UNAUTHORIZED,
            UnknownTask(_) | UnknownKind(_) | NotFound => StatusCode::NOT_FOUND,
            ValidationFailed(_) | NoStepsFound | DanglingSubQuestion(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ProviderUnavailable(_) | FixtureMiss(_) => StatusCode::BAD_GATEWAY,
            RateLimited { .. } => StatusCode::SERVICE_UNAVAILABLE,
            StorageFailure(_) | Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn message(&self) -> String {
        use ApiError::*;
        match self {
            EmptyQuestion => "question is empty".into(),
            UnknownTemplate(id) => format!("no prompt template `{id}`"),
            InvalidBody(m) => m.clone(),
            Unauthorized => "missing or wrong bearer token".into(),
            UnknownTask(id) => format!("no task `{id}`"),
            UnknownKind(kind) => format!("no export kind `{kind}`"),
            NotFound => "no such route".into(),
            ValidationFailed(errors) => errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            NoStepsFound => "the model output contains no reasoning steps".into(),
            DanglingSubQuestion(i) => format!("sub-question {i} has no sub-answer"),
            ProviderUnavailable(m) | StorageFailure(m) | Internal(m) => m.clone(),
            FixtureMiss(key) => format!("no recorded response for {key}"),
            RateLimited { retry_after_ms } => format!("provider rate limit, retry after {retry_after_ms} ms"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code(), "message": self.message() });
        if let ApiError::ValidationFailed(details) = &self {
            error["details"] = json!(details);
        }
        (self.status(), Json(json!({ "error": error }))).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::ProviderUnavailable(m) => ApiError::ProviderUnavailable(m),
            GatewayError::FixtureMiss(key) => ApiError::FixtureMiss(key),
            GatewayError::RateLimited { retry_after_ms } => ApiError::RateLimited { retry_after_ms },
            GatewayError::InvalidRequest(m) | GatewayError::StoreWriteFailure(m) => ApiError::Internal(m),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownTask(id) => ApiError::UnknownTask(id),
            StoreError::ValidationFailed(errors) => ApiError::ValidationFailed(errors),
            StoreError::StorageFailure(m) => ApiError::StorageFailure(m),
            StoreError::BundleMismatch(m) => ApiError::Internal(m),
        }
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::DanglingSubQuestion(i) => ApiError::DanglingSubQuestion(i),
            ParseError::EmptyInput | ParseError::NoStepsFound | ParseError::MissingFinalAnswer => {
                ApiError::NoStepsFound
            }
        }
    }
}
