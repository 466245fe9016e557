//! Grants persisted on disk, keyed by canonical query string.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use smcgate_core::{Grant, Query};

use crate::ClientError;

#[derive(Debug, Default)]
pub struct GrantStore {
    path: Option<PathBuf>,
    grants: BTreeMap<String, Grant>,
}

impl GrantStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the store at `path`; a missing file is an empty store.
    pub fn open(path: &Path) -> Result<Self, ClientError> {
        let grants = match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| ClientError::Store(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(ClientError::Store(format!("{}: {e}", path.display()))),
        };
        Ok(Self {
            path: Some(path.to_owned()),
            grants,
        })
    }

    pub fn get(&self, query: &Query) -> Option<&Grant> {
        self.grants.get(&query.canonical_string())
    }

    /// Files the grant under every query it covers.
    pub fn put(&mut self, grant: &Grant) -> Result<(), ClientError> {
        for q in &grant.queries {
            self.grants.insert(q.canonical_string(), grant.clone());
        }
        self.save()
    }

    pub fn remove(&mut self, query: &Query) -> Result<(), ClientError> {
        self.grants.remove(&query.canonical_string());
        self.save()
    }

    pub fn len(&self) -> usize {
        self.grants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grants.is_empty()
    }

    fn save(&self) -> Result<(), ClientError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let err = |e: std::io::Error| ClientError::Store(format!("{}: {e}", path.display()));
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(err)?;
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(err)?;
        f.write_all(&serde_json::to_vec_pretty(&self.grants).expect("grants serialize"))
            .map_err(err)?;
        f.sync_all().map_err(err)?;
        std::fs::rename(&tmp, path).map_err(err)
    }
}
