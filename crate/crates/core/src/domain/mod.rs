//! Shared vocabulary of the pipeline: labels, candidate items, review edits
//! and the per-step review metrics derived from them.

mod candidate;
mod edit;
mod label;
mod metrics;
pub mod script;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use candidate::{Candidate, ObjectInstance, TitleAnnotation, Vocabulary};
pub use edit::{apply_edit_script, Applied, EditAction, EditKind, EditTally};
pub use label::{normalize_label, Label};
pub use metrics::{kept_percentage, step_metrics, StepMetrics};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("label is empty after normalization")]
    EmptyLabel,
    #[error("object name {0:?} is empty")]
    EmptyObjectName(String),
    #[error("object {name:?} has the same name as its type")]
    NameEqualsType { name: String },
    #[error("object type {0:?} is not a confirmed object type")]
    UnknownObjectType(String),
    #[error("activity {0:?} is not a confirmed activity")]
    UnknownActivity(String),
    #[error("object {0:?} is not a confirmed object")]
    UnknownObject(String),
    #[error("invalid item text {text:?}: {reason}")]
    InvalidItem { text: String, reason: String },
    #[error("edit target {0:?} is not in the candidate list")]
    UnknownTarget(String),
    #[error("item {0:?} is already in the candidate list")]
    DuplicateAdd(String),
    #[error("editing {target:?} would duplicate existing item {replacement:?}")]
    DuplicateEdit { target: String, replacement: String },
    #[error("malformed edit: {0}")]
    InvalidEdit(String),
    #[error("{edited} edited + {removed} removed exceeds the review basis of {basis}")]
    NegativeCount { edited: usize, removed: usize, basis: usize },
    #[error("step must be between 1 and 4, got {0}")]
    InvalidStep(u8),
}

/// One of the four pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Step {
    ObjectTypes = 1,
    Activities = 2,
    Objects = 3,
    Events = 4,
}

impl Step {
    pub const ALL: [Step; 4] = [Step::ObjectTypes, Step::Activities, Step::Objects, Step::Events];

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Zero-based position, handy for indexing per-step arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn previous(self) -> Option<Step> {
        Step::from_number(self.number() - 1).ok()
    }

    pub fn later(self) -> impl Iterator<Item = Step> {
        Step::ALL.into_iter().filter(move |s| *s > self)
    }

    pub fn earlier(self) -> impl Iterator<Item = Step> {
        Step::ALL.into_iter().filter(move |s| *s < self)
    }

    pub fn from_number(n: u8) -> Result<Step, DomainError> {
        match n {
            1 => Ok(Step::ObjectTypes),
            2 => Ok(Step::Activities),
            3 => Ok(Step::Objects),
            4 => Ok(Step::Events),
            other => Err(DomainError::InvalidStep(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::ObjectTypes => "object types",
            Step::Activities => "activities",
            Step::Objects => "objects",
            Step::Events => "events",
        }
    }
}

impl TryFrom<u8> for Step {
    type Error = DomainError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Step::from_number(value)
    }
}

impl From<Step> for u8 {
    fn from(value: Step) -> Self {
        value.number()
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}
