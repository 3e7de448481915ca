use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{normalize_label, Candidate, Label, ObjectInstance, TitleAnnotation, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum ParseError {
    #[error("no JSON array found in the response")]
    NoJsonFound,
    #[error("the response array contained no usable labels")]
    EmptyList,
    #[error("every record in the response was invalid ({} warnings)", .0.len())]
    AllRecordsInvalid(Vec<String>),
}

/// Parsed items plus the records that were dropped, as human-readable
/// warnings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub warnings: Vec<String>,
}

/// Finds the first JSON array embedded in `raw`, tolerating prose and code
/// fences around it. Arrays for which `prefer` holds win over earlier ones.
fn find_array(raw: &str, prefer: impl Fn(&[Value]) -> bool) -> Result<Vec<Value>, ParseError> {
    let mut first = None;
    for (i, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            if prefer(&items) {
                return Ok(items);
            }
            first.get_or_insert(items);
        }
    }
    first.ok_or(ParseError::NoJsonFound)
}

pub fn extract_json_array(raw: &str) -> Result<Vec<Value>, ParseError> {
    find_array(raw, |_| true)
}

fn describe(v: &Value) -> String {
    let s = v.to_string();
    if s.chars().count() > 80 {
        format!("{}…", s.chars().take(80).collect::<String>())
    } else {
        s
    }
}

/// Parses a list of object types or activities.
pub fn parse_labels(raw: &str) -> Result<Parsed<Label>, ParseError> {
    let values = find_array(raw, |items| !items.is_empty() && items.iter().all(Value::is_string))?;
    let mut seen = HashSet::new();
    let mut out = Parsed { items: Vec::new(), warnings: Vec::new() };
    for v in &values {
        let Some(s) = v.as_str() else {
            out.warnings.push(format!("ignored non-string element {}", describe(v)));
            continue;
        };
        match normalize_label(s) {
            Ok(label) => {
                if seen.insert(label.clone()) {
                    out.items.push(label);
                } else {
                    out.warnings.push(format!("dropped duplicate {s:?}"));
                }
            }
            Err(_) => out.warnings.push("ignored blank label".into()),
        }
    }
    if out.items.is_empty() {
        return Err(ParseError::EmptyList);
    }
    Ok(out)
}

fn str_field<'a>(record: &'a Value, key: &str) -> Option<&'a str> {
    record.get(key).and_then(Value::as_str)
}

fn any_object(items: &[Value]) -> bool {
    items.iter().any(Value::is_object)
}

/// Parses `[{"object": ..., "object_type": ...}]` against confirmed types.
pub fn parse_object_instances(raw: &str, confirmed_types: &[Label]) -> Result<Parsed<ObjectInstance>, ParseError> {
    let values = find_array(raw, any_object)?;
    let mut seen = HashSet::new();
    let mut out = Parsed { items: Vec::new(), warnings: Vec::new() };
    for v in &values {
        let (Some(name), Some(ty)) = (str_field(v, "object"), str_field(v, "object_type")) else {
            out.warnings.push(format!("record without object/object_type strings: {}", describe(v)));
            continue;
        };
        let ty = match normalize_label(ty) {
            Ok(t) if confirmed_types.contains(&t) => t,
            _ => {
                out.warnings.push(format!("{name:?}: object type {ty:?} is not confirmed"));
                continue;
            }
        };
        match ObjectInstance::new(name, ty) {
            Ok(obj) => {
                if seen.insert(obj.identity()) {
                    out.items.push(obj);
                } else {
                    out.warnings.push(format!("dropped duplicate object {name:?}"));
                }
            }
            Err(e) => out.warnings.push(format!("{name:?}: {e}")),
        }
    }
    if out.items.is_empty() && !values.is_empty() {
        return Err(ParseError::AllRecordsInvalid(out.warnings));
    }
    Ok(out)
}

fn resolve_batch_title(batch: &[String], title: &str) -> Option<usize> {
    batch
        .iter()
        .position(|t| t == title)
        .or_else(|| batch.iter().position(|t| t.trim() == title.trim()))
}

/// Parses step-4 annotations. The output has exactly one entry per batch
/// title, in batch order; titles the model skipped come back empty.
pub fn parse_annotations(raw: &str, vocab: &Vocabulary, batch: &[String]) -> Result<Parsed<TitleAnnotation>, ParseError> {
    let values = find_array(raw, any_object)?;
    let mut slots: Vec<Option<TitleAnnotation>> = vec![None; batch.len()];
    let mut warnings = Vec::new();

    for v in &values {
        let Some(title) = str_field(v, "title") else {
            warnings.push(format!("record without a title: {}", describe(v)));
            continue;
        };
        let Some(idx) = resolve_batch_title(batch, title) else {
            warnings.push(format!("title {title:?} is not in the batch"));
            continue;
        };
        if slots[idx].is_some() {
            warnings.push(format!("repeated title {title:?}"));
            continue;
        }
        let mut ann = TitleAnnotation::empty(batch[idx].clone());
        for a in v.get("activities").and_then(Value::as_array).into_iter().flatten() {
            match a.as_str().map(normalize_label) {
                Some(Ok(label)) if vocab.has_activity(&label) => {
                    if !ann.activities.contains(&label) {
                        ann.activities.push(label);
                    }
                }
                _ => warnings.push(format!("{title:?}: dropped unknown activity {}", describe(a))),
            }
        }
        for o in v.get("objects").and_then(Value::as_array).into_iter().flatten() {
            let reference = match o {
                Value::String(s) => Some(s.clone()),
                Value::Object(_) => match (str_field(o, "object"), str_field(o, "object_type")) {
                    (Some(n), Some(t)) => Some(format!("{n} :: {t}")),
                    (Some(n), None) => Some(n.to_owned()),
                    _ => None,
                },
                _ => None,
            };
            match reference.as_deref().and_then(|r| vocab.resolve_object(r)) {
                Some(obj) => {
                    if !ann.objects.contains(obj) {
                        ann.objects.push(obj.clone());
                    }
                }
                None => warnings.push(format!("{title:?}: dropped unknown object {}", describe(o))),
            }
        }
        slots[idx] = Some(ann);
    }

    let items = slots
        .into_iter()
        .zip(batch)
        .map(|(slot, title)| slot.unwrap_or_else(|| TitleAnnotation::empty(title.clone())))
        .collect();
    Ok(Parsed { items, warnings })
}
