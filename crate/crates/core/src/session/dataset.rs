use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{parse_awt_bytes, title_statistics, AwtLog, IngestError, TitleStat};

/// A parsed upload with its title statistics. Kept in memory next to the
/// session; only the raw bytes are persisted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub sha256: String,
    pub log: AwtLog,
    pub stats: Vec<TitleStat>,
}

impl Dataset {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IngestError> {
        let log = parse_awt_bytes(bytes)?;
        let stats = title_statistics(&log.events);
        Ok(Dataset { sha256: sha256_hex(bytes), log, stats })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What the session document records about its data file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub sha256: String,
    /// File name as uploaded.
    pub source_name: String,
    pub events: usize,
    pub skipped_empty_titles: usize,
    pub distinct_titles: usize,
}

impl DatasetRef {
    pub fn describe(dataset: &Dataset, source_name: &str) -> Self {
        DatasetRef {
            sha256: dataset.sha256.clone(),
            source_name: source_name.to_owned(),
            events: dataset.log.events.len(),
            skipped_empty_titles: dataset.log.skipped_empty_titles,
            distinct_titles: dataset.stats.len(),
        }
    }
}
