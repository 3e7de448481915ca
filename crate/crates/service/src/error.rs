//! The closed set of error codes returned by the HTTP API.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use exoar_core::domain::script::ScriptError;
use exoar_core::domain::DomainError;
use exoar_core::gateway::GatewayError;
use exoar_core::ingest::IngestError;
use exoar_core::ocel::OcelError;
use exoar_core::session::SessionError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

macro_rules! codes {
    ($($variant:ident => $name:literal, $status:ident;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum ErrorCode {
            $($variant,)*
        }

        impl ErrorCode {
            pub const ALL: &'static [ErrorCode] = &[$(ErrorCode::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(ErrorCode::$variant => $name,)*
                }
            }

            pub fn status(self) -> StatusCode {
                match self {
                    $(ErrorCode::$variant => StatusCode::$status,)*
                }
            }
        }
    };
}

codes! {
    BadRequest => "bad_request", BAD_REQUEST;
    InvalidScript => "invalid_script", BAD_REQUEST;
    InvalidStep => "invalid_step", BAD_REQUEST;
    EmptyProfession => "empty_profession", BAD_REQUEST;
    EmptyFile => "empty_file", BAD_REQUEST;
    MalformedRow => "malformed_row", BAD_REQUEST;
    MissingApiKey => "missing_api_key", BAD_REQUEST;
    StepMismatch => "step_mismatch", BAD_REQUEST;
    EmptyLabel => "empty_label", UNPROCESSABLE_ENTITY;
    UnknownTarget => "unknown_target", UNPROCESSABLE_ENTITY;
    DuplicateAdd => "duplicate_add", UNPROCESSABLE_ENTITY;
    DuplicateEdit => "duplicate_edit", UNPROCESSABLE_ENTITY;
    InvalidEdit => "invalid_edit", UNPROCESSABLE_ENTITY;
    BudgetExceeded => "budget_exceeded", UNPROCESSABLE_ENTITY;
    NotFound => "not_found", NOT_FOUND;
    MethodNotAllowed => "method_not_allowed", METHOD_NOT_ALLOWED;
    PayloadTooLarge => "payload_too_large", PAYLOAD_TOO_LARGE;
    StepOrderViolation => "step_order_violation", CONFLICT;
    Busy => "busy", CONFLICT;
    NothingConfirmed => "nothing_confirmed", CONFLICT;
    MissingPriceTable => "missing_price_table", CONFLICT;
    MissingContext => "missing_context", CONFLICT;
    UpstreamAuth => "upstream_auth", UNAUTHORIZED;
    UpstreamTransport => "upstream_transport", BAD_GATEWAY;
    ParseFailed => "parse_failed", BAD_GATEWAY;
    CorruptSession => "corrupt_session", INTERNAL_SERVER_ERROR;
    InvalidDocument => "invalid_document", INTERNAL_SERVER_ERROR;
    Internal => "internal", INTERNAL_SERVER_ERROR;
}

/// Error body: `{"code": ..., "message": ..., "details": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), details: None }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code.status().is_server_error() {
            tracing::error!(code = self.code.as_str(), message = %self.message, "request failed");
        }
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let msg = e.to_string();
        match e {
            IngestError::EmptyFile => ApiError::new(ErrorCode::EmptyFile, msg),
            IngestError::MalformedRow { line, reason } => {
                ApiError::new(ErrorCode::MalformedRow, msg).with_details(json!({ "line": line, "reason": reason }))
            }
            IngestError::Io(_) => ApiError::new(ErrorCode::BadRequest, msg),
        }
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        let code = match &e {
            DomainError::EmptyLabel => ErrorCode::EmptyLabel,
            DomainError::UnknownTarget(_) => ErrorCode::UnknownTarget,
            DomainError::DuplicateAdd(_) => ErrorCode::DuplicateAdd,
            DomainError::DuplicateEdit { .. } => ErrorCode::DuplicateEdit,
            DomainError::InvalidStep(_) => ErrorCode::InvalidStep,
            _ => ErrorCode::InvalidEdit,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let msg = e.to_string();
        match e {
            GatewayError::MissingContext { step, .. } => {
                ApiError::new(ErrorCode::MissingContext, msg).with_details(json!({ "step": step }))
            }
            GatewayError::Transport { status, attempts } => ApiError::new(ErrorCode::UpstreamTransport, msg)
                .with_details(json!({ "attempts": attempts, "status": status })),
            GatewayError::AuthRejected => ApiError::new(ErrorCode::UpstreamAuth, msg),
            GatewayError::BudgetExceeded { ceiling, spent, requested } => ApiError::new(ErrorCode::BudgetExceeded, msg)
                .with_details(json!({ "ceiling": ceiling, "spent": spent, "requested": requested })),
            GatewayError::ParseFailed { step, responses, .. } => ApiError::new(ErrorCode::ParseFailed, msg)
                .with_details(json!({ "step": step, "attempts": responses.len() })),
            GatewayError::Fixture(_) => ApiError::new(ErrorCode::Internal, msg),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::EmptyProfession => ApiError::new(ErrorCode::EmptyProfession, msg),
            SessionError::Ingest(e) => e.into(),
            SessionError::StepOrderViolation { step, reason } => ApiError::new(ErrorCode::StepOrderViolation, msg)
                .with_details(json!({ "step": step, "reason": reason })),
            SessionError::StepMismatch { expected, found } => ApiError::new(ErrorCode::StepMismatch, msg)
                .with_details(json!({ "expected": expected, "found": found })),
            SessionError::Domain(e) => e.into(),
            SessionError::Gateway(e) => e.into(),
            SessionError::NothingConfirmed => ApiError::new(ErrorCode::NothingConfirmed, msg),
            SessionError::MissingPriceTable => ApiError::new(ErrorCode::MissingPriceTable, msg),
            SessionError::NotFound(_) => ApiError::new(ErrorCode::NotFound, msg),
            SessionError::CorruptSession { .. } => ApiError::new(ErrorCode::CorruptSession, msg),
            SessionError::Busy(_) => ApiError::new(ErrorCode::Busy, msg),
            SessionError::Io(_) => ApiError::new(ErrorCode::Internal, msg),
        }
    }
}

impl From<OcelError> for ApiError {
    fn from(e: OcelError) -> Self {
        let msg = e.to_string();
        match e {
            OcelError::StepOrderViolation(status) => ApiError::new(ErrorCode::StepOrderViolation, msg)
                .with_details(json!({ "step": 4, "status": status })),
            OcelError::InvalidDocument(violations) => ApiError::new(ErrorCode::InvalidDocument, msg)
                .with_details(serde_json::to_value(violations).unwrap_or(Value::Null)),
        }
    }
}

impl From<ScriptError> for ApiError {
    fn from(e: ScriptError) -> Self {
        ApiError::new(ErrorCode::InvalidScript, e.to_string()).with_details(json!({ "line": e.line }))
    }
}
