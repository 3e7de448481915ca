pub mod cli;
pub mod error;
pub mod http;
pub mod llm;
pub mod report;

pub use error::{ApiError, ErrorCode};
