//! Structured blackboard shared by every agent in a pipeline run.
//!
//! Writes are last-write-wins per key, and every write is also appended to an
//! audit log that is never truncated. Values are `serde_json::Value` trees, so
//! they are JSON-representable by construction: non-finite floats cannot be
//! stored (`serde_json::Number` rejects them), and [`StructuralMemory::put_number`]
//! surfaces that as an error instead of silently storing `null`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::protocol::RoleName;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory key must be non-empty")]
    InvalidKey,
    #[error("non-finite number for key `{0}`")]
    NonFinite(String),
    #[error("snapshot I/O failed for {path}: {source}")]
    Snapshot {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot is not a JSON object of entries: {0}")]
    Parse(String),
}

/// One write to the blackboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub key: String,
    pub value: Value,
    pub writer: RoleName,
    pub step: u32,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySummary {
    pub count: usize,
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructuralMemory {
    entries: BTreeMap<String, MemoryEntry>,
    audit: Vec<MemoryEntry>,
    next_seq: u64,
}

impl StructuralMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `value` under `key` and returns the global sequence number of the write.
    pub fn put(
        &mut self,
        key: &str,
        value: Value,
        writer: RoleName,
        step: u32,
    ) -> Result<u64, MemoryError> {
        if key.is_empty() {
            return Err(MemoryError::InvalidKey);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let entry = MemoryEntry {
            key: key.to_string(),
            value,
            writer,
            step,
            seq,
        };
        self.audit.push(entry.clone());
        self.entries.insert(entry.key.clone(), entry);
        Ok(seq)
    }

    pub fn put_number(
        &mut self,
        key: &str,
        value: f64,
        writer: RoleName,
        step: u32,
    ) -> Result<u64, MemoryError> {
        let number = serde_json::Number::from_f64(value)
            .ok_or_else(|| MemoryError::NonFinite(key.to_string()))?;
        self.put(key, Value::Number(number), writer, step)
    }

    /// Current value for `key`; `None` when it was never written.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key).map(|e| &e.value)
    }

    pub fn entry(&self, key: &str) -> Option<&MemoryEntry> {
        self.entries.get(key)
    }

    /// Current value, treating a stored `null` the same as absence.
    pub fn get_non_null(&self, key: &str) -> Option<&Value> {
        self.get(key).filter(|v| !v.is_null())
    }

    /// Count and sorted names of keys whose current value is not `null`.
    pub fn summary(&self) -> MemorySummary {
        let keys: Vec<String> = self
            .entries
            .values()
            .filter(|e| !e.value.is_null())
            .map(|e| e.key.clone())
            .collect();
        MemorySummary {
            count: keys.len(),
            keys,
        }
    }

    pub fn audit(&self) -> &[MemoryEntry] {
        &self.audit
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Current values keyed by name, in sorted key order.
    pub fn values(&self) -> BTreeMap<String, Value> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }

    /// Canonical snapshot document: object of key -> current value.
    pub fn to_snapshot(&self) -> Value {
        Value::Object(self.values().into_iter().collect())
    }

    /// Rebuilds a store from a snapshot document. Provenance is not part of a
    /// snapshot, so restored entries are attributed to the project manager at step 0.
    pub fn from_snapshot(doc: &Value) -> Result<Self, MemoryError> {
        let map = doc
            .as_object()
            .ok_or_else(|| MemoryError::Parse("top level is not an object".into()))?;
        let mut memory = Self::new();
        for (key, value) in map {
            memory
                .put(key, value.clone(), RoleName::ProjectManager, 0)
                .map_err(|e| MemoryError::Parse(e.to_string()))?;
        }
        Ok(memory)
    }

    /// Writes the canonical snapshot and returns the number of bytes written.
    pub fn save_snapshot(&self, path: &Path) -> Result<usize, MemoryError> {
        let text = canonical_json(&self.to_snapshot());
        fs::write(path, text.as_bytes()).map_err(|source| MemoryError::Snapshot {
            path: path.display().to_string(),
            source,
        })?;
        Ok(text.len())
    }

    pub fn load_snapshot(path: &Path) -> Result<Self, MemoryError> {
        let text = fs::read_to_string(path).map_err(|source| MemoryError::Snapshot {
            path: path.display().to_string(),
            source,
        })?;
        let doc: Value =
            serde_json::from_str(&text).map_err(|e| MemoryError::Parse(e.to_string()))?;
        Self::from_snapshot(&doc)
    }
}

/// Canonical text form: sorted object keys, compact separators, UTF-8.
///
/// `serde_json::Map` is ordered by key (no `preserve_order` feature), so plain
/// compact serialization is already canonical.
pub fn canonical_json(value: &Value) -> String {
    serde_json::to_string(value).expect("serializing a Value cannot fail")
}
