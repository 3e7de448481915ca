use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Candidate, DomainError, Step, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Add,
    Remove,
    Edit,
}

impl EditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::Add => "add",
            EditKind::Remove => "remove",
            EditKind::Edit => "edit",
        }
    }
}

/// One reviewer action on a step's candidate list.
///
/// `target` is the item text for `add`, otherwise the identity of an item
/// already in the list. `replacement` is only present for `edit`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditAction {
    pub kind: EditKind,
    pub step: Step,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
    pub timestamp: DateTime<Utc>,
}

impl EditAction {
    pub fn add(step: Step, item: impl Into<String>) -> Self {
        Self::new(EditKind::Add, step, item.into(), None)
    }

    pub fn remove(step: Step, target: impl Into<String>) -> Self {
        Self::new(EditKind::Remove, step, target.into(), None)
    }

    pub fn edit(step: Step, target: impl Into<String>, replacement: impl Into<String>) -> Self {
        Self::new(EditKind::Edit, step, target.into(), Some(replacement.into()))
    }

    fn new(kind: EditKind, step: Step, target: String, replacement: Option<String>) -> Self {
        EditAction { kind, step, target, replacement, timestamp: Utc::now() }
    }
}

/// How the reviewed basis changed: counts refer to items of the original
/// list, except `added` which counts surviving user additions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditTally {
    pub added: usize,
    pub edited: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied<T> {
    pub items: Vec<T>,
    pub tally: EditTally,
}

struct Slot<T> {
    item: T,
    /// `None` for user additions.
    original: Option<usize>,
    touched: bool,
}

/// Applies `edits` in order to `items`.
///
/// Removals drop items, edits replace them in place and additions append.
/// Each edit sees the list as left by the previous one.
pub fn apply_edit_script<T: Candidate>(
    items: &[T],
    edits: &[EditAction],
    vocab: &Vocabulary,
) -> Result<Applied<T>, DomainError> {
    let mut slots: Vec<Slot<T>> = items
        .iter()
        .enumerate()
        .map(|(i, item)| Slot { item: item.clone(), original: Some(i), touched: false })
        .collect();
    let mut removed = 0;

    for edit in edits {
        match edit.kind {
            EditKind::Add => {
                if edit.replacement.is_some() {
                    return Err(DomainError::InvalidEdit("add takes no replacement".into()));
                }
                let item = T::from_script_text(&edit.target, vocab)?;
                let id = item.identity();
                if slots.iter().any(|s| s.item.identity() == id) {
                    return Err(DomainError::DuplicateAdd(edit.target.clone()));
                }
                slots.push(Slot { item, original: None, touched: false });
            }
            EditKind::Remove => {
                if edit.replacement.is_some() {
                    return Err(DomainError::InvalidEdit("remove takes no replacement".into()));
                }
                let pos = position(&slots, &edit.target)?;
                if slots.remove(pos).original.is_some() {
                    removed += 1;
                }
            }
            EditKind::Edit => {
                let replacement = edit
                    .replacement
                    .as_deref()
                    .ok_or_else(|| DomainError::InvalidEdit("edit requires a replacement".into()))?;
                let pos = position(&slots, &edit.target)?;
                let item = T::from_script_text(replacement, vocab)?;
                let id = item.identity();
                let clash = slots.iter().enumerate().any(|(i, s)| i != pos && s.item.identity() == id);
                if clash {
                    return Err(DomainError::DuplicateEdit {
                        target: edit.target.clone(),
                        replacement: replacement.to_owned(),
                    });
                }
                slots[pos].item = item;
                slots[pos].touched = true;
            }
        }
    }

    let tally = EditTally {
        added: slots.iter().filter(|s| s.original.is_none()).count(),
        edited: slots.iter().filter(|s| s.original.is_some() && s.touched).count(),
        removed,
    };
    Ok(Applied { items: slots.into_iter().map(|s| s.item).collect(), tally })
}

fn position<T: Candidate>(slots: &[Slot<T>], target: &str) -> Result<usize, DomainError> {
    let id = T::target_identity(target)?;
    slots
        .iter()
        .position(|s| s.item.identity() == id)
        .ok_or_else(|| DomainError::UnknownTarget(target.to_owned()))
}
