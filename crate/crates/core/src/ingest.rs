//! Active-window-tracking log ingestion and title frequency statistics.
//!
//! The canonical log is a UTF-8 CSV with the header `start,end,app,title`,
//! RFC 4180 quoting and RFC 3339 timestamps. Other trackers' exports can be
//! adapted by converting to this shape before calling [`parse_awt_log`].

use std::collections::{BTreeSet, HashMap};
use std::io::Read;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER: [&str; 4] = ["start", "end", "app", "title"];
pub const OBJECT_TITLE_LIMIT: usize = 500;
pub const OBJECT_TITLE_MIN_DAYS: usize = 3;
pub const ENRICHMENT_TITLE_LIMIT: usize = 100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("log is empty")]
    EmptyFile,
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("failed to read log: {0}")]
    Io(#[from] std::io::Error),
}

/// One focused-window interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowEvent {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub app: String,
    pub title: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AwtLog {
    pub events: Vec<WindowEvent>,
    /// Data rows dropped because their title was blank.
    pub skipped_empty_titles: usize,
}

fn timestamp(raw: &str, line: u64, column: &str) -> Result<DateTime<Utc>, IngestError> {
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| IngestError::MalformedRow { line, reason: format!("bad {column} timestamp {raw:?}: {e}") })
}

pub fn parse_awt_log<R: Read>(mut stream: R) -> Result<AwtLog, IngestError> {
    let mut bytes = Vec::new();
    stream.read_to_end(&mut bytes)?;
    parse_awt_bytes(&bytes)
}

pub fn parse_awt_bytes(bytes: &[u8]) -> Result<AwtLog, IngestError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut records = reader.byte_records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(e, 1))?,
        None => return Err(IngestError::EmptyFile),
    };
    let names: Vec<&[u8]> = header.iter().map(|f| f.trim_ascii()).collect();
    if names.len() != HEADER.len() || names.iter().zip(HEADER).any(|(got, want)| *got != want.as_bytes()) {
        return Err(IngestError::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", HEADER.join(",")),
        });
    }

    let mut log = AwtLog::default();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != HEADER.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {} columns, found {}", HEADER.len(), rec.len()),
            });
        }
        let field = |i: usize| {
            std::str::from_utf8(&rec[i])
                .map_err(|_| IngestError::MalformedRow { line, reason: "invalid UTF-8".into() })
        };
        let start = timestamp(field(0)?, line, "start")?;
        let end = timestamp(field(1)?, line, "end")?;
        if end < start {
            return Err(IngestError::MalformedRow { line, reason: "end precedes start".into() });
        }
        let title = field(3)?;
        if title.trim().is_empty() {
            log.skipped_empty_titles += 1;
            continue;
        }
        log.events.push(WindowEvent { start, end, app: field(2)?.to_owned(), title: title.to_owned() });
    }
    Ok(log)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    IngestError::MalformedRow { line, reason: e.to_string() }
}

/// Frequency summary for one exact window title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleStat {
    pub title: String,
    pub occurrence_count: usize,
    /// Distinct UTC calendar dates of the events' start timestamps.
    pub distinct_days: usize,
    pub total_duration: i64,
}

/// One entry per distinct title, sorted by count descending then title.
pub fn title_statistics(events: &[WindowEvent]) -> Vec<TitleStat> {
    struct Acc {
        count: usize,
        days: BTreeSet<NaiveDate>,
        duration: i64,
    }
    let mut by_title: HashMap<&str, Acc> = HashMap::new();
    for e in events {
        let acc = by_title
            .entry(e.title.as_str())
            .or_insert_with(|| Acc { count: 0, days: BTreeSet::new(), duration: 0 });
        acc.count += 1;
        acc.days.insert(e.start.date_naive());
        acc.duration += (e.end - e.start).num_seconds();
    }
    let mut stats: Vec<TitleStat> = by_title
        .into_iter()
        .map(|(title, acc)| TitleStat {
            title: title.to_owned(),
            occurrence_count: acc.count,
            distinct_days: acc.days.len(),
            total_duration: acc.duration,
        })
        .collect();
    stats.sort_by(|a, b| b.occurrence_count.cmp(&a.occurrence_count).then_with(|| a.title.cmp(&b.title)));
    stats
}

/// Titles used to find object instances: the `n` most frequent among those
/// seen on at least `min_days` distinct days.
pub fn select_object_titles(stats: &[TitleStat], n: usize, min_days: usize) -> Vec<String> {
    stats
        .iter()
        .filter(|s| s.distinct_days >= min_days)
        .take(n)
        .map(|s| s.title.clone())
        .collect()
}

/// Titles sent for enrichment: the `n` most frequent, regardless of days.
pub fn select_enrichment_titles(stats: &[TitleStat], n: usize) -> Vec<String> {
    stats.iter().take(n).map(|s| s.title.clone()).collect()
}
