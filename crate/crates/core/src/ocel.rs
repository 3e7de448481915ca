//! Propagation of confirmed title annotations over the window log and
//! OCEL 2.0 JSON export.
//!
//! Each annotated window event yields one OCEL event per activity, since an
//! OCEL event has a single type. Events whose title has no activities are
//! left out and counted in the [`ExportManifest`].

use std::collections::{HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Label, ObjectInstance, Step};
use crate::ingest::WindowEvent;
use crate::session::{Dataset, Session, StepStatus};

pub const QUALIFIER: &str = "involves";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrichedEvent<'a> {
    pub source: &'a WindowEvent,
    pub activities: &'a [Label],
    pub objects: &'a [ObjectInstance],
}

/// Attaches annotations to the events with exactly matching titles.
/// Events without an annotation, or whose annotation has no activities,
/// are skipped.
pub fn propagate<'a>(
    events: &'a [WindowEvent],
    annotations: &'a [crate::domain::TitleAnnotation],
) -> Vec<EnrichedEvent<'a>> {
    let mut by_title = HashMap::new();
    for a in annotations.iter().filter(|a| !a.activities.is_empty()) {
        by_title.entry(a.title.as_str()).or_insert(a);
    }
    events
        .iter()
        .filter_map(|e| {
            by_title.get(e.title.as_str()).map(|a| EnrichedEvent {
                source: e,
                activities: &a.activities,
                objects: &a.objects,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub value_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcelType {
    pub name: String,
    pub attributes: Vec<AttributeDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectAttribute {
    pub name: String,
    pub time: DateTime<Utc>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventAttribute {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Relationship {
    pub object_id: String,
    pub qualifier: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcelObject {
    pub id: String,
    #[serde(rename = "type")]
    pub object_type: String,
    #[serde(default)]
    pub attributes: Vec<ObjectAttribute>,
    #[serde(default)]
    pub relationships: Vec<Relationship>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcelEvent {
    pub id: String,
    #[serde(rename = "type")]
    pub event_type: String,
    pub time: DateTime<Utc>,
    #[serde(default)]
    pub attributes: Vec<EventAttribute>,
    #[serde(default)]
    pub relationships: Vec<Relationship>,
}

/// OCEL 2.0 document in its JSON interchange shape.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OcelDocument {
    pub object_types: Vec<OcelType>,
    pub event_types: Vec<OcelType>,
    pub objects: Vec<OcelObject>,
    pub events: Vec<OcelEvent>,
}

/// Counts written next to the OCEL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub session_id: String,
    pub object_types: usize,
    pub event_types: usize,
    pub objects: usize,
    pub events: usize,
    pub window_events: usize,
    pub enriched_window_events: usize,
    pub excluded_window_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    UnknownEventType,
    UnknownObject,
    UnknownObjectType,
    DuplicateEventId,
    DuplicateObjectId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    /// Id of the offending event or object.
    pub id: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum OcelError {
    #[error("step 4 is not confirmed ({0:?})")]
    StepOrderViolation(StepStatus),
    #[error("document has {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidDocument(Vec<Violation>),
}

/// Lowercase id with runs of non-alphanumerics collapsed to one hyphen.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("object");
    }
    out
}

/// Assigns unique slugs in order; later collisions get `-2`, `-3`, ...
fn object_ids(objects: &[ObjectInstance]) -> Vec<String> {
    let mut taken = HashSet::new();
    objects
        .iter()
        .map(|o| {
            let base = slug(&o.name);
            let mut id = base.clone();
            let mut n = 1;
            while !taken.insert(id.clone()) {
                n += 1;
                id = format!("{base}-{n}");
            }
            id
        })
        .collect()
}

fn string_attrs(names: &[&str]) -> Vec<AttributeDecl> {
    names.iter().map(|n| AttributeDecl { name: (*n).into(), value_type: "string".into() }).collect()
}

/// Builds the OCEL document for a session whose step 4 is confirmed.
///
/// Object types without any confirmed instance are omitted.
pub fn build_ocel(session: &Session, dataset: &Dataset) -> Result<(OcelDocument, ExportManifest), OcelError> {
    let status = session.steps.status(Step::Events);
    if status != StepStatus::Confirmed {
        return Err(OcelError::StepOrderViolation(status));
    }
    let objects = &session.steps.objects.confirmed_items;
    let ids = object_ids(objects);
    let id_of: HashMap<&ObjectInstance, &str> = objects.iter().zip(&ids).map(|(o, id)| (o, id.as_str())).collect();

    let used_types: HashSet<&Label> = objects.iter().map(|o| &o.object_type).collect();
    let object_types = session
        .steps
        .object_types
        .confirmed_items
        .iter()
        .filter(|t| used_types.contains(t))
        .map(|t| OcelType { name: t.to_string(), attributes: string_attrs(&["name"]) })
        .collect();
    let event_types = session
        .steps
        .activities
        .confirmed_items
        .iter()
        .map(|a| OcelType { name: a.to_string(), attributes: string_attrs(&["app", "title"]) })
        .collect();
    let ocel_objects = objects
        .iter()
        .zip(&ids)
        .map(|(o, id)| OcelObject {
            id: id.clone(),
            object_type: o.object_type.to_string(),
            attributes: vec![ObjectAttribute { name: "name".into(), time: DateTime::UNIX_EPOCH, value: o.name.clone() }],
            relationships: Vec::new(),
        })
        .collect();

    let annotations = session.final_annotations();
    let enriched = propagate(&dataset.log.events, &annotations);
    let mut events = Vec::new();
    for e in &enriched {
        let relationships: Vec<Relationship> = e
            .objects
            .iter()
            .filter_map(|o| id_of.get(o))
            .map(|id| Relationship { object_id: (*id).to_owned(), qualifier: QUALIFIER.into() })
            .collect();
        for activity in e.activities {
            events.push(OcelEvent {
                id: format!("ev-{:06}", events.len() + 1),
                event_type: activity.to_string(),
                time: e.source.start,
                attributes: vec![
                    EventAttribute { name: "app".into(), value: e.source.app.clone() },
                    EventAttribute { name: "title".into(), value: e.source.title.clone() },
                ],
                relationships: relationships.clone(),
            });
        }
    }

    let doc = OcelDocument { object_types, event_types, objects: ocel_objects, events };
    let manifest = ExportManifest {
        session_id: session.id.clone(),
        object_types: doc.object_types.len(),
        event_types: doc.event_types.len(),
        objects: doc.objects.len(),
        events: doc.events.len(),
        window_events: dataset.log.events.len(),
        enriched_window_events: enriched.len(),
        excluded_window_events: dataset.log.events.len() - enriched.len(),
    };
    Ok((doc, manifest))
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a str>, rule: Rule, what: &str, out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            out.push(Violation { rule, id: id.to_owned(), detail: format!("duplicate {what} id") });
        }
    }
}

/// Referential-integrity check. Empty iff the document is consistent.
pub fn validate_ocel(doc: &OcelDocument) -> Vec<Violation> {
    let mut out = Vec::new();
    let object_types: HashSet<&str> = doc.object_types.iter().map(|t| t.name.as_str()).collect();
    let event_types: HashSet<&str> = doc.event_types.iter().map(|t| t.name.as_str()).collect();
    let object_ids: HashSet<&str> = doc.objects.iter().map(|o| o.id.as_str()).collect();

    duplicates(doc.objects.iter().map(|o| o.id.as_str()), Rule::DuplicateObjectId, "object", &mut out);
    duplicates(doc.events.iter().map(|e| e.id.as_str()), Rule::DuplicateEventId, "event", &mut out);

    for o in &doc.objects {
        if !object_types.contains(o.object_type.as_str()) {
            out.push(Violation {
                rule: Rule::UnknownObjectType,
                id: o.id.clone(),
                detail: format!("object type {:?} is not declared", o.object_type),
            });
        }
        for r in &o.relationships {
            if !object_ids.contains(r.object_id.as_str()) {
                out.push(Violation {
                    rule: Rule::UnknownObject,
                    id: o.id.clone(),
                    detail: format!("relationship to unknown object {:?}", r.object_id),
                });
            }
        }
    }
    for e in &doc.events {
        if !event_types.contains(e.event_type.as_str()) {
            out.push(Violation {
                rule: Rule::UnknownEventType,
                id: e.id.clone(),
                detail: format!("event type {:?} is not declared", e.event_type),
            });
        }
        for r in &e.relationships {
            if !object_ids.contains(r.object_id.as_str()) {
                out.push(Violation {
                    rule: Rule::UnknownObject,
                    id: e.id.clone(),
                    detail: format!("relationship to unknown object {:?}", r.object_id),
                });
            }
        }
    }
    out
}

/// Pretty-printed OCEL 2.0 JSON. Refuses inconsistent documents.
pub fn serialize_ocel(doc: &OcelDocument) -> Result<Vec<u8>, OcelError> {
    let violations = validate_ocel(doc);
    if !violations.is_empty() {
        return Err(OcelError::InvalidDocument(violations));
    }
    let mut bytes = serde_json::to_vec_pretty(doc).expect("OCEL documents always serialize");
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn parse_ocel(bytes: &[u8]) -> Result<OcelDocument, serde_json::Error> {
    serde_json::from_slice(bytes)
}
