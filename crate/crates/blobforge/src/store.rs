//! Directory-backed scene store with per-scene revisions.
//!
//! Each scene lives in `{dir}/{id}.json` and is replaced by atomic rename.
//! Mutations of one scene are serialized by a per-scene mutex; different
//! scenes proceed independently.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use blobforge_core::edit::{apply_edit, EditOp};
use blobforge_core::BlobScene;
use serde::{Deserialize, Serialize};

/// A scene with its revision counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredScene {
    pub id: String,
    pub revision: u64,
    pub scene: BlobScene,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("scene `{0}` not found")]
    NotFound(String),
    #[error("scene `{0}` already exists")]
    Exists(String),
    #[error("revision mismatch: expected {expected}, current {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("invalid scene id {0:?}: use 1-128 of [A-Za-z0-9_-]")]
    BadId(String),
    #[error(transparent)]
    Invalid(#[from] blobforge_core::Error),
    #[error("corrupt scene file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Slot = Arc<Mutex<Option<StoredScene>>>;

pub struct SceneStore {
    dir: PathBuf,
    slots: Mutex<HashMap<String, Slot>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // a panic mid-mutation never leaves a half-written value: writes go to
    // disk before the in-memory slot is replaced
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl SceneStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            slots: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn load(&self, id: &str) -> Result<Option<StoredScene>, StoreError> {
        let path = self.path(id);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let stored: StoredScene = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(Some(stored))
    }

    fn slot(&self, id: &str) -> Result<Slot, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::BadId(id.into()));
        }
        let mut slots = lock(&self.slots);
        if let Some(s) = slots.get(id) {
            return Ok(s.clone());
        }
        let slot = Arc::new(Mutex::new(self.load(id)?));
        slots.insert(id.into(), slot.clone());
        Ok(slot)
    }

    fn persist(&self, stored: &StoredScene) -> Result<(), StoreError> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, stored).map_err(std::io::Error::from)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path(&stored.id)).map_err(|e| e.error)?;
        Ok(())
    }

    fn check(expected: Option<u64>, current: u64) -> Result<(), StoreError> {
        match expected {
            Some(e) if e != current => Err(StoreError::Conflict { expected: e, current }),
            _ => Ok(()),
        }
    }

    /// Creates a scene at revision 1.
    pub fn create(&self, id: &str, scene: BlobScene) -> Result<StoredScene, StoreError> {
        let slot = self.slot(id)?;
        let mut guard = lock(&slot);
        if guard.is_some() {
            return Err(StoreError::Exists(id.into()));
        }
        let stored = StoredScene {
            id: id.into(),
            revision: 1,
            scene,
        };
        self.persist(&stored)?;
        *guard = Some(stored.clone());
        Ok(stored)
    }

    pub fn get(&self, id: &str) -> Result<StoredScene, StoreError> {
        let slot = self.slot(id)?;
        let guard = lock(&slot);
        guard.clone().ok_or_else(|| StoreError::NotFound(id.into()))
    }

    /// Runs `f` on the current scene and stores its result as the next revision.
    fn mutate(
        &self,
        id: &str,
        expected: Option<u64>,
        f: impl FnOnce(&BlobScene) -> Result<BlobScene, StoreError>,
    ) -> Result<StoredScene, StoreError> {
        let slot = self.slot(id)?;
        let mut guard = lock(&slot);
        let current = guard.as_ref().ok_or_else(|| StoreError::NotFound(id.into()))?;
        Self::check(expected, current.revision)?;
        let next = StoredScene {
            id: id.into(),
            revision: current.revision + 1,
            scene: f(&current.scene)?,
        };
        self.persist(&next)?;
        *guard = Some(next.clone());
        Ok(next)
    }

    /// Replaces a scene; creates it at revision 1 if absent and `expected`
    /// is `None` or `Some(0)`.
    pub fn put(&self, id: &str, scene: BlobScene, expected: Option<u64>) -> Result<StoredScene, StoreError> {
        {
            let slot = self.slot(id)?;
            let mut guard = lock(&slot);
            if guard.is_none() {
                Self::check(expected.filter(|&e| e != 0), 0)?;
                let stored = StoredScene {
                    id: id.into(),
                    revision: 1,
                    scene,
                };
                self.persist(&stored)?;
                *guard = Some(stored.clone());
                return Ok(stored);
            }
        }
        self.mutate(id, expected, |_| Ok(scene))
    }

    pub fn edit(&self, id: &str, op: &EditOp, expected: Option<u64>) -> Result<StoredScene, StoreError> {
        self.mutate(id, expected, |s| Ok(apply_edit(s, op)?))
    }

    pub fn delete(&self, id: &str, expected: Option<u64>) -> Result<(), StoreError> {
        let slot = self.slot(id)?;
        let mut guard = lock(&slot);
        let current = guard.as_ref().ok_or_else(|| StoreError::NotFound(id.into()))?;
        Self::check(expected, current.revision)?;
        std::fs::remove_file(self.path(id))?;
        *guard = None;
        Ok(())
    }

    /// Ids of every stored scene, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".json") {
                if valid_id(id) {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_and_persistence() {
        let dir = tempfile::tempdir().unwrap();
        let store = SceneStore::open(dir.path()).unwrap();
        let scene = BlobScene::empty(8, 8).unwrap();
        assert_eq!(store.create("s1", scene.clone()).unwrap().revision, 1);
        assert!(matches!(store.create("s1", scene.clone()), Err(StoreError::Exists(_))));
        assert!(matches!(
            store.put("s1", scene.clone(), Some(5)),
            Err(StoreError::Conflict { expected: 5, current: 1 })
        ));
        assert_eq!(store.put("s1", scene.clone(), Some(1)).unwrap().revision, 2);

        let reopened = SceneStore::open(dir.path()).unwrap();
        assert_eq!(reopened.get("s1").unwrap().revision, 2);
        assert_eq!(reopened.list().unwrap(), vec!["s1".to_string()]);
        reopened.delete("s1", None).unwrap();
        assert!(matches!(reopened.get("s1"), Err(StoreError::NotFound(_))));
        assert!(matches!(store.get("../etc"), Err(StoreError::BadId(_))));
    }
}
