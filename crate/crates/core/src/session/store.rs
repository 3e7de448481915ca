use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::{sha256_hex, Dataset, Session, SessionError};

/// Directory of sessions: `<id>.json` holds the document and `<id>.csv`
/// the uploaded log it was created from.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(SessionStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, id: &str, ext: &str) -> Result<PathBuf, SessionError> {
        if !valid_id(id) {
            return Err(SessionError::NotFound(id.to_owned()));
        }
        Ok(self.root.join(format!("{id}.{ext}")))
    }

    pub fn document_path(&self, id: &str) -> Result<PathBuf, SessionError> {
        self.path(id, "json")
    }

    pub fn data_path(&self, id: &str) -> Result<PathBuf, SessionError> {
        self.path(id, "csv")
    }

    /// Stores a new session together with its raw log.
    pub fn create(&self, session: &Session, raw: &[u8]) -> Result<(), SessionError> {
        write_atomic(&self.data_path(&session.id)?, raw)?;
        self.save(session)
    }

    pub fn save(&self, session: &Session) -> Result<(), SessionError> {
        let bytes = serde_json::to_vec_pretty(session).expect("session documents always serialize");
        write_atomic(&self.document_path(&session.id)?, &bytes)?;
        Ok(())
    }

    /// Loads a session and re-parses its log, checking the recorded hash.
    pub fn load(&self, id: &str) -> Result<(Session, Dataset), SessionError> {
        let doc_path = self.document_path(id)?;
        let doc = match fs::read(&doc_path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(SessionError::NotFound(id.to_owned())),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |reason: String| SessionError::CorruptSession { id: id.to_owned(), reason };
        let session: Session = serde_json::from_slice(&doc).map_err(|e| corrupt(format!("unreadable document: {e}")))?;
        if session.id != id {
            return Err(corrupt(format!("document carries id {}", session.id)));
        }
        let raw = fs::read(self.data_path(id)?).map_err(|e| corrupt(format!("data file: {e}")))?;
        let hash = sha256_hex(&raw);
        if hash != session.dataset.sha256 {
            return Err(corrupt(format!("data file hash {hash} does not match {}", session.dataset.sha256)));
        }
        let dataset = Dataset::from_bytes(&raw).map_err(|e| corrupt(format!("data file: {e}")))?;
        Ok((session, dataset))
    }

    pub fn delete(&self, id: &str) -> Result<(), SessionError> {
        let doc = self.document_path(id)?;
        match fs::remove_file(&doc) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(SessionError::NotFound(id.to_owned())),
            Err(e) => return Err(e.into()),
        }
        match fs::remove_file(self.data_path(id)?) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }

    /// Ids of the stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>, SessionError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if valid_id(stem) {
                        ids.push(stem.to_owned());
                    }
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
