//! Preset library: the built-in catalog plus user presets persisted to one
//! JSON file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use haptic_core::{builtin_presets, PatternSpec, PresetEntry, SpecError};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LIBRARY_VERSION: u32 = 1;
pub const DEFAULT_LIBRARY_PATH: &str = "hdesigner-library.json";
pub const MAX_NAME_LEN: usize = 128;

/// On-disk form. Only user presets are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryFile {
    pub version: u32,
    pub presets: Vec<PresetEntry>,
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("preset {0:?} not found")]
    NotFound(String),
    #[error("preset {0:?} is built in and cannot be changed")]
    Builtin(String),
    #[error(transparent)]
    Invalid(#[from] SpecError),
    #[error("library file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("library file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Saved {
    Created,
    Replaced,
}

pub fn validate_name(name: &str) -> Result<(), SpecError> {
    if name.is_empty() {
        return Err(SpecError::new("name", "must not be empty"));
    }
    if name.chars().count() > MAX_NAME_LEN {
        return Err(SpecError::new("name", format!("longer than {MAX_NAME_LEN} characters")));
    }
    if name.chars().any(char::is_control) {
        return Err(SpecError::new("name", "must not contain control characters"));
    }
    Ok(())
}

/// Thread-safe preset store. Every mutation rewrites the file through a
/// temporary file and a rename, so readers see either the old or the new
/// library, never a mix.
pub struct Library {
    path: PathBuf,
    builtins: Vec<PresetEntry>,
    user: Mutex<BTreeMap<String, PresetEntry>>,
}

impl Library {
    /// Loads `path`, or starts empty if it does not exist.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LibraryError> {
        let path = path.into();
        let builtins = builtin_presets();
        let user = match fs::read(&path) {
            Ok(bytes) => parse(&path, &bytes, &builtins)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(source) => return Err(LibraryError::Io { path, source }),
        };
        Ok(Self {
            path,
            builtins,
            user: Mutex::new(user),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Built-ins in catalog order, then user presets by name.
    pub fn list(&self) -> Vec<PresetEntry> {
        let user = self.user.lock();
        self.builtins.iter().cloned().chain(user.values().cloned()).collect()
    }

    pub fn get(&self, name: &str) -> Option<PresetEntry> {
        self.builtin(name)
            .cloned()
            .or_else(|| self.user.lock().get(name).cloned())
    }

    pub fn save(&self, name: &str, spec: PatternSpec) -> Result<(PresetEntry, Saved), LibraryError> {
        validate_name(name)?;
        if self.builtin(name).is_some() {
            return Err(LibraryError::Builtin(name.to_owned()));
        }
        spec.validate()?;
        let entry = PresetEntry {
            name: name.to_owned(),
            spec,
            builtin: false,
        };
        let mut user = self.user.lock();
        let mut next = user.clone();
        let saved = match next.insert(name.to_owned(), entry.clone()) {
            Some(_) => Saved::Replaced,
            None => Saved::Created,
        };
        self.persist(&next)?;
        *user = next;
        Ok((entry, saved))
    }

    pub fn delete(&self, name: &str) -> Result<PresetEntry, LibraryError> {
        if self.builtin(name).is_some() {
            return Err(LibraryError::Builtin(name.to_owned()));
        }
        let mut user = self.user.lock();
        let mut next = user.clone();
        let removed = next.remove(name).ok_or_else(|| LibraryError::NotFound(name.to_owned()))?;
        self.persist(&next)?;
        *user = next;
        Ok(removed)
    }

    fn builtin(&self, name: &str) -> Option<&PresetEntry> {
        self.builtins.iter().find(|p| p.name == name)
    }

    fn persist(&self, user: &BTreeMap<String, PresetEntry>) -> Result<(), LibraryError> {
        let file = LibraryFile {
            version: LIBRARY_VERSION,
            presets: user.values().cloned().collect(),
        };
        let mut json = serde_json::to_vec_pretty(&file).expect("library serializes");
        json.push(b'\n');
        write_atomic(&self.path, &json).map_err(|source| LibraryError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

fn parse(path: &Path, bytes: &[u8], builtins: &[PresetEntry]) -> Result<BTreeMap<String, PresetEntry>, LibraryError> {
    let corrupt = |message: String| LibraryError::Corrupt {
        path: path.to_owned(),
        message,
    };
    let file: LibraryFile = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
    if file.version != LIBRARY_VERSION {
        return Err(corrupt(format!("unsupported version {}", file.version)));
    }
    let mut user = BTreeMap::new();
    for mut p in file.presets {
        if builtins.iter().any(|b| b.name == p.name) {
            tracing::warn!(name = %p.name, "ignoring stored preset that shadows a built-in");
            continue;
        }
        validate_name(&p.name).map_err(|e| corrupt(format!("preset {:?}: {e}", p.name)))?;
        p.spec.validate().map_err(|e| corrupt(format!("preset {:?}: {e}", p.name)))?;
        p.builtin = false;
        if user.insert(p.name.clone(), p).is_some() {
            return Err(corrupt("duplicate preset name".into()));
        }
    }
    Ok(user)
}

/// Replaces `path` with `bytes` via a synced temporary file in the same
/// directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".hdesigner-library")
        .suffix(".tmp")
        .tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    #[cfg(unix)]
    if let Ok(d) = fs::File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}
