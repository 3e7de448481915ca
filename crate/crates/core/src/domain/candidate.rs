use serde::{Deserialize, Serialize};

use super::{normalize_label, DomainError, Label};

/// Confirmed vocabulary that item text is resolved against when parsing
/// edit-script targets and replacements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub object_types: Vec<Label>,
    pub activities: Vec<Label>,
    pub objects: Vec<ObjectInstance>,
}

impl Vocabulary {
    pub fn has_object_type(&self, label: &Label) -> bool {
        self.object_types.contains(label)
    }

    pub fn has_activity(&self, label: &Label) -> bool {
        self.activities.contains(label)
    }

    /// Resolves an object reference by exact name, then case-insensitively.
    /// A `name :: type` reference pins the type when names are shared.
    pub fn resolve_object(&self, reference: &str) -> Option<&ObjectInstance> {
        let reference = reference.trim();
        if let Some((name, ty)) = split_object_text(reference) {
            if let Ok(ty) = normalize_label(ty) {
                let hit = self
                    .objects
                    .iter()
                    .find(|o| o.object_type == ty && o.name.eq_ignore_ascii_case(name));
                if hit.is_some() {
                    return hit;
                }
            }
        }
        self.objects
            .iter()
            .find(|o| o.name == reference)
            .or_else(|| self.objects.iter().find(|o| o.name.to_lowercase() == reference.to_lowercase()))
    }
}

/// An item that can be reviewed: it has a stable identity for edit targets
/// and a textual form used by edit scripts.
pub trait Candidate: Clone + std::fmt::Debug {
    /// Key used to match edit targets and detect duplicates.
    fn identity(&self) -> String;

    /// Maps a script target onto the identity space of this item type.
    fn target_identity(target: &str) -> Result<String, DomainError>;

    fn from_script_text(text: &str, vocab: &Vocabulary) -> Result<Self, DomainError>;

    fn to_script_text(&self) -> String;
}

impl Candidate for Label {
    fn identity(&self) -> String {
        self.as_str().to_owned()
    }

    fn target_identity(target: &str) -> Result<String, DomainError> {
        Ok(normalize_label(target)?.as_str().to_owned())
    }

    fn from_script_text(text: &str, _vocab: &Vocabulary) -> Result<Self, DomainError> {
        normalize_label(text)
    }

    fn to_script_text(&self) -> String {
        self.as_str().to_owned()
    }
}

/// A concrete named entity of a confirmed object type.
///
/// Names keep their original capitalization (person names, conference
/// titles); the type is a normalized [`Label`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub name: String,
    pub object_type: Label,
}

impl ObjectInstance {
    pub fn new(name: &str, object_type: Label) -> Result<Self, DomainError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(DomainError::EmptyObjectName(name.to_owned()));
        }
        if name.to_lowercase() == object_type.as_str() {
            return Err(DomainError::NameEqualsType { name: name.to_owned() });
        }
        Ok(ObjectInstance { name: name.to_owned(), object_type })
    }
}

const OBJECT_SEPARATOR: &str = "::";

fn split_object_text(text: &str) -> Option<(&str, &str)> {
    text.rsplit_once(OBJECT_SEPARATOR).map(|(n, t)| (n.trim(), t.trim()))
}

fn object_identity(name: &str, object_type: &str) -> String {
    format!("{} {OBJECT_SEPARATOR} {}", name.trim().to_lowercase(), object_type)
}

impl Candidate for ObjectInstance {
    fn identity(&self) -> String {
        object_identity(&self.name, self.object_type.as_str())
    }

    fn target_identity(target: &str) -> Result<String, DomainError> {
        let (name, ty) = split_object_text(target).ok_or_else(|| DomainError::InvalidItem {
            text: target.to_owned(),
            reason: "expected `name :: object type`".into(),
        })?;
        Ok(object_identity(name, normalize_label(ty)?.as_str()))
    }

    fn from_script_text(text: &str, vocab: &Vocabulary) -> Result<Self, DomainError> {
        let (name, ty) = split_object_text(text).ok_or_else(|| DomainError::InvalidItem {
            text: text.to_owned(),
            reason: "expected `name :: object type`".into(),
        })?;
        let ty = normalize_label(ty)?;
        if !vocab.has_object_type(&ty) {
            return Err(DomainError::UnknownObjectType(ty.to_string()));
        }
        ObjectInstance::new(name, ty)
    }

    fn to_script_text(&self) -> String {
        format!("{} {OBJECT_SEPARATOR} {}", self.name, self.object_type)
    }
}

/// A window title with the activities and objects it was associated with.
/// Both lists may be empty when the title is left unannotated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleAnnotation {
    pub title: String,
    pub activities: Vec<Label>,
    pub objects: Vec<ObjectInstance>,
}

impl TitleAnnotation {
    pub fn empty(title: impl Into<String>) -> Self {
        TitleAnnotation { title: title.into(), activities: Vec::new(), objects: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty() && self.objects.is_empty()
    }
}

const ANNOTATION_SEPARATOR: &str = "||";

impl Candidate for TitleAnnotation {
    fn identity(&self) -> String {
        self.title.clone()
    }

    fn target_identity(target: &str) -> Result<String, DomainError> {
        Ok(target.to_owned())
    }

    fn from_script_text(text: &str, vocab: &Vocabulary) -> Result<Self, DomainError> {
        let (title, acts, objs) = split_annotation_text(text).ok_or_else(|| DomainError::InvalidItem {
            text: text.to_owned(),
            reason: "expected `title || activity; ... || object; ...`".into(),
        })?;
        if title.is_empty() {
            return Err(DomainError::InvalidItem { text: text.to_owned(), reason: "empty title".into() });
        }
        let mut activities: Vec<Label> = Vec::new();
        for part in list_parts(acts) {
            let label = normalize_label(part)?;
            if !vocab.has_activity(&label) {
                return Err(DomainError::UnknownActivity(label.to_string()));
            }
            if !activities.contains(&label) {
                activities.push(label);
            }
        }
        let mut objects: Vec<ObjectInstance> = Vec::new();
        for part in list_parts(objs) {
            let object = vocab
                .resolve_object(part)
                .ok_or_else(|| DomainError::UnknownObject(part.to_owned()))?;
            if !objects.contains(object) {
                objects.push(object.clone());
            }
        }
        Ok(TitleAnnotation { title: title.to_owned(), activities, objects })
    }

    fn to_script_text(&self) -> String {
        let acts: Vec<&str> = self.activities.iter().map(Label::as_str).collect();
        let objs: Vec<&str> = self.objects.iter().map(|o| o.name.as_str()).collect();
        format!(
            "{} {ANNOTATION_SEPARATOR} {} {ANNOTATION_SEPARATOR} {}",
            self.title,
            acts.join("; "),
            objs.join("; ")
        )
        .trim_end()
        .to_owned()
    }
}

/// Splits `title || acts || objs` from the right so titles may contain `||`.
fn split_annotation_text(text: &str) -> Option<(&str, &str, &str)> {
    let mut parts = text.rsplitn(3, ANNOTATION_SEPARATOR);
    let objs = parts.next()?;
    let acts = parts.next()?;
    let title = parts.next()?;
    Some((title.trim(), acts.trim(), objs.trim()))
}

fn list_parts(text: &str) -> impl Iterator<Item = &str> {
    text.split(';').map(str::trim).filter(|p| !p.is_empty())
}
