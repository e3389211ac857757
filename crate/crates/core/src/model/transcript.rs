//! Record/replay of model traffic.
//!
//! The store is an append-only JSON-lines file of
//! `{request_key, operation, response}` records.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{request_key, ModelBackend, ModelError, ModelRequest, Operation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTranscript {
    pub request_key: String,
    pub operation: Operation,
    pub response: String,
}

#[derive(Debug, Default, Clone)]
pub struct TranscriptStore {
    records: HashMap<String, ModelTranscript>,
}

impl TranscriptStore {
    /// Loads a store; a missing file is an empty store.
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let store_err = |message: String| ModelError::Store {
            path: path.display().to_string(),
            message,
        };
        let mut records = HashMap::new();
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(TranscriptStore::default()),
            Err(e) => return Err(store_err(e.to_string())),
        };
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| store_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ModelTranscript = serde_json::from_str(&line)
                .map_err(|e| store_err(format!("line {}: {e}", lineno + 1)))?;
            records.insert(record.request_key.clone(), record);
        }
        Ok(TranscriptStore { records })
    }

    pub fn from_records(records: impl IntoIterator<Item = ModelTranscript>) -> Self {
        TranscriptStore {
            records: records.into_iter().map(|r| (r.request_key.clone(), r)).collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&ModelTranscript> {
        self.records.get(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn embed_key(text: &str) -> String {
    request_key(Operation::Embed, text)
}

/// Answers strictly from a transcript store; never touches the network.
pub struct ReplayBackend {
    store: TranscriptStore,
}

impl ReplayBackend {
    pub fn new(store: TranscriptStore) -> Self {
        ReplayBackend { store }
    }

    fn lookup(&self, operation: Operation, key: String) -> Result<&ModelTranscript, ModelError> {
        self.store
            .get(&key)
            .ok_or(ModelError::ReplayMiss { operation, key })
    }
}

impl ModelBackend for ReplayBackend {
    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, ModelError> {
        Ok(self.lookup(request.operation(), request.key())?.response.clone())
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ModelError> {
        let record = self.lookup(Operation::Embed, embed_key(text))?;
        serde_json::from_str(&record.response).map_err(|e| ModelError::Reply(e.to_string()))
    }
}

/// Forwards to an inner backend and buffers every exchange for [`flush`](Self::flush).
pub struct RecordingBackend {
    inner: Arc<dyn ModelBackend>,
    path: PathBuf,
    known: TranscriptStore,
    pending: Mutex<BTreeMap<String, ModelTranscript>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ModelBackend>, path: &Path) -> Result<Self, ModelError> {
        Ok(RecordingBackend {
            inner,
            path: path.to_path_buf(),
            known: TranscriptStore::load(path)?,
            pending: Mutex::new(BTreeMap::new()),
        })
    }

    fn record(&self, key: String, operation: Operation, response: &str) {
        if self.known.get(&key).is_some() {
            return;
        }
        self.pending.lock().expect("pending lock").insert(
            key.clone(),
            ModelTranscript {
                request_key: key,
                operation,
                response: response.to_string(),
            },
        );
    }

    /// Appends new records, sorted by key, and returns how many were written.
    pub fn flush(&self) -> Result<usize, ModelError> {
        let pending = std::mem::take(&mut *self.pending.lock().expect("pending lock"));
        if pending.is_empty() {
            return Ok(0);
        }
        let store_err = |e: std::io::Error| ModelError::Store {
            path: self.path.display().to_string(),
            message: e.to_string(),
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(store_err)?;
        for record in pending.values() {
            let line = serde_json::to_string(record).expect("transcript serializes");
            writeln!(file, "{line}").map_err(store_err)?;
        }
        Ok(pending.len())
    }
}

impl ModelBackend for RecordingBackend {
    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, ModelError> {
        let key = request.key();
        if let Some(known) = self.known.get(&key) {
            return Ok(known.response.clone());
        }
        let response = self.inner.complete(request)?;
        self.record(key, request.operation(), &response);
        Ok(response)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ModelError> {
        let key = embed_key(text);
        if let Some(known) = self.known.get(&key) {
            return serde_json::from_str(&known.response).map_err(|e| ModelError::Reply(e.to_string()));
        }
        let values = self.inner.embed(text)?;
        let response = serde_json::to_string(&values).expect("floats serialize");
        self.record(key, Operation::Embed, &response);
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FixtureBackend, PaperDoc};
    use crate::schema::{NodePath, SchemaNode};

    #[test]
    fn record_then_replay_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let doc = PaperDoc::new(
            "d1",
            "T",
            "We propose things.",
            "## Method / Implementation / Operation\nadamw cosine. lr warmup.\n",
        );
        let node = SchemaNode::leaf("Operation", "");
        let np = NodePath::parse("Abstract/Method/Implementation/Operation").unwrap();
        let request = ModelRequest::Extract {
            doc: &doc,
            node: &node,
            path: &np,
        };

        let recorder = RecordingBackend::new(Arc::new(FixtureBackend::new(8, 1)), &path).unwrap();
        let live = recorder.complete(&request).unwrap();
        let live_vec = recorder.embed("hello world").unwrap();
        assert_eq!(recorder.flush().unwrap(), 2);
        assert_eq!(recorder.flush().unwrap(), 0);

        let replay = ReplayBackend::new(TranscriptStore::load(&path).unwrap());
        assert_eq!(replay.complete(&request).unwrap(), live);
        assert_eq!(replay.embed("hello world").unwrap(), live_vec);
        assert!(matches!(
            replay.embed("unseen"),
            Err(ModelError::ReplayMiss { operation: Operation::Embed, .. })
        ));
    }

    #[test]
    fn missing_store_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(TranscriptStore::load(&dir.path().join("none.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn corrupt_store_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"request_key\":\"a\",\"operation\":\"embed\",\"response\":\"[]\"}\nnope\n").unwrap();
        let err = TranscriptStore::load(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
