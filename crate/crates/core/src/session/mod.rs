//! The four-step review session: generation, review, invalidation, metrics,
//! cost, persistence and per-session serialization of mutations.

mod cost;
mod dataset;
mod engine;
mod pipeline;
mod state;
mod store;

use thiserror::Error;

use crate::domain::{DomainError, Step};
use crate::gateway::GatewayError;
use crate::ingest::IngestError;

pub use cost::{estimate_cost, PriceTable};
pub use dataset::{sha256_hex, Dataset, DatasetRef};
pub use engine::Engine;
pub use pipeline::{edits_by_step, run_scripted};
pub use state::{
    review_sample, Generation, Items, RecordSummary, Review, Session, StepState, StepStatus, Steps,
    REVIEW_SAMPLE_SIZE, SESSION_FORMAT_VERSION,
};
pub use store::SessionStore;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("profession must not be empty")]
    EmptyProfession,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("step {step}: {reason}")]
    StepOrderViolation { step: Step, reason: String },
    #[error("edit for step {found} submitted to step {expected}")]
    StepMismatch { expected: Step, found: Step },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no step has been confirmed yet")]
    NothingConfirmed,
    #[error("no price table is configured for this session")]
    MissingPriceTable,
    #[error("session {0:?} not found")]
    NotFound(String),
    #[error("session {id} is corrupt: {reason}")]
    CorruptSession { id: String, reason: String },
    #[error("session {0} is busy with another operation")]
    Busy(String),
    #[error("session store: {0}")]
    Io(#[from] std::io::Error),
}
