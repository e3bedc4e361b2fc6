//! File-backed document store with atomic replacement.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Model,
    Session,
    Matrix,
}

impl DocKind {
    pub const ALL: [DocKind; 3] = [DocKind::Model, DocKind::Session, DocKind::Matrix];

    pub fn dir_name(self) -> &'static str {
        match self {
            DocKind::Model => "models",
            DocKind::Session => "sessions",
            DocKind::Matrix => "matrices",
        }
    }

    /// Prefix of generated ids, e.g. `s3` for the third session.
    pub fn id_prefix(self) -> char {
        match self {
            DocKind::Model => 'm',
            DocKind::Session => 's',
            DocKind::Matrix => 'x',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub kind: DocKind,
    pub id: String,
    pub version: u64,
    pub payload: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{kind:?} `{id}` not found")]
    NotFound { kind: DocKind, id: String },
    #[error("invalid document id `{0}`")]
    InvalidId(String),
    #[error("storage I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt document: {0}")]
    Corrupt(#[from] serde_json::Error),
}

/// Compact JSON with object keys in sorted order and a trailing newline.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    // `Value` objects are BTreeMap-backed, so keys come out sorted.
    let value = serde_json::to_value(value)?;
    let mut out = serde_json::to_string(&value)?;
    out.push('\n');
    Ok(out)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// One JSON file per document under `<root>/<kind>/<id>.json`.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for kind in DocKind::ALL {
            fs::create_dir_all(root.join(kind.dir_name()))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, kind: DocKind, id: &str) -> PathBuf {
        self.root.join(kind.dir_name()).join(format!("{id}.json"))
    }

    fn temp_path(&self, kind: DocKind, id: &str) -> PathBuf {
        self.root.join(kind.dir_name()).join(format!(".{id}.json.tmp"))
    }

    /// Writes the document to a temporary file and renames it over the
    /// previous version, so readers see either the old or the new file.
    pub fn save(&self, doc: &StoredDocument) -> Result<(), StoreError> {
        if !valid_id(&doc.id) {
            return Err(StoreError::InvalidId(doc.id.clone()));
        }
        let text = canonical_json(doc)?;
        let tmp = self.temp_path(doc.kind, &doc.id);
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(text.as_bytes())?;
            file.sync_all()?;
        }
        fs::rename(&tmp, self.path(doc.kind, &doc.id))?;
        Ok(())
    }

    pub fn load(&self, kind: DocKind, id: &str) -> Result<StoredDocument, StoreError> {
        let not_found = || StoreError::NotFound { kind, id: id.to_string() };
        if !valid_id(id) {
            return Err(not_found());
        }
        let text = match fs::read_to_string(self.path(kind, id)) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(not_found()),
            Err(e) => return Err(e.into()),
        };
        let doc: StoredDocument = serde_json::from_str(&text)?;
        if doc.kind != kind || doc.id != id {
            return Err(not_found());
        }
        Ok(doc)
    }

    /// Ids of all stored documents of `kind`, sorted.
    pub fn ids(&self, kind: DocKind) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join(kind.dir_name()))? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".json") {
                if !name.starts_with('.') {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
