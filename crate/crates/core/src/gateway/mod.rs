//! Prompt construction, chat-completion backends and structured response
//! parsing for the four generation steps.

mod backend;
mod live;
mod parse;
mod prompt;
mod repair;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Step;

pub use backend::{response_name, write_replay_dir, Backend, FixtureBackend, ReplayBackend};
pub use live::{LiveBackend, LiveConfig, RequestLimiter, RetryPolicy, DEFAULT_CONCURRENCY};
pub use parse::{
    extract_json_array, parse_annotations, parse_labels, parse_object_instances, ParseError, Parsed,
};
pub use prompt::{build_prompt, PromptContext, FORMAT_ANNOTATIONS, FORMAT_LABELS, FORMAT_OBJECTS};
pub use repair::{generate_with_repair, TokenBudget};

pub use crate::domain::TitleAnnotation;

pub const DEFAULT_MODEL: &str = "gpt-4.1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    JsonArray,
    JsonObjects,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub model_id: String,
    pub temperature: f64,
    pub response_format_hint: ResponseFormat,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
}

/// Identifies one backend call within a session: the step, the batch within
/// the step (0 unless step 4 is split) and the attempt (1, or 2 on repair).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CallSite {
    pub step: Step,
    pub batch: usize,
    pub attempt: u8,
}

/// Model settings carried by a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_id: String,
    pub temperature: f64,
    /// Titles per step-4 request; `None` sends the whole selection at once.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Ceiling on prompt + completion tokens summed over the session.
    #[serde(default)]
    pub token_ceiling: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig { model_id: DEFAULT_MODEL.into(), temperature: 0.0, batch_size: None, token_ceiling: None }
    }
}

/// A response that failed to parse and triggered the repair attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedAttempt {
    pub raw_response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub error: String,
}

/// Audit record of one generation (one batch for step 4).
///
/// Token counts cover every attempt, so costs can be summed over records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub step: Step,
    #[serde(default)]
    pub batch: usize,
    pub request: ChatRequest,
    pub raw_response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub attempts: u8,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<RejectedAttempt>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum TransportStatus {
    Http(u16),
    NotFound(String),
    Timeout,
    Connection(String),
}

impl std::fmt::Display for TransportStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportStatus::Http(code) => write!(f, "HTTP {code}"),
            TransportStatus::NotFound(what) => write!(f, "no recorded response {what}"),
            TransportStatus::Timeout => f.write_str("timed out"),
            TransportStatus::Connection(msg) => write!(f, "connection failed: {msg}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("missing context for step {step}: {what}")]
    MissingContext { step: Step, what: &'static str },
    #[error("transport failure after {attempts} attempt(s): {status}")]
    Transport { status: TransportStatus, attempts: u32 },
    #[error("the model endpoint rejected the API key")]
    AuthRejected,
    #[error("token budget exceeded: {spent} spent + ~{requested} requested > ceiling {ceiling}")]
    BudgetExceeded { ceiling: u64, spent: u64, requested: u64 },
    #[error("step {step} response could not be parsed after {} attempt(s): {error}", responses.len())]
    ParseFailed { step: Step, error: ParseError, responses: Vec<String> },
    #[error("fixture directory is unusable: {0}")]
    Fixture(String),
}
