//! Expert-guided object and activity recognition over active-window-tracking
//! logs, producing object-centric event logs.
//!
//! The pipeline runs four reviewed generation steps (object types,
//! activities, object instances, event enrichment) and exports the result
//! as OCEL 2.0 JSON.

pub mod domain;
pub mod gateway;
pub mod ingest;
pub mod ocel;
pub mod session;
