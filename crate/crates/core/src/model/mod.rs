//! Gateway to every model-backed capability: paper-type classification,
//! leaf extraction, bottom-up aggregation and text embedding.
//!
//! [`ContentModel`] owns the contract (passthroughs, empty-input shortcuts,
//! reply normalization, truncation, dimension checks). What actually answers a
//! request is a [`ModelBackend`]: a remote service, a transcript replay, a
//! recorder wrapping another backend, or the rule-based fixture backend.

mod fixture;
pub mod prompts;
mod remote;
mod transcript;
pub mod transport;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{NodePath, PaperType, SchemaNode};

pub use fixture::{section_heading, FixtureBackend, HashEmbedder};
pub use remote::{Endpoint, RemoteBackend, RemoteConfig};
pub(crate) use remote::InFlight;
pub use transcript::{ModelTranscript, RecordingBackend, ReplayBackend, TranscriptStore};
pub use transport::{CountingTransport, HttpTransport, OfflineTransport, Transport, TransportError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transport failure: {0}")]
    Transport(#[from] TransportError),
    #[error("unexpected reply shape: {0}")]
    Reply(String),
    #[error("no recorded transcript for {operation} request {key}")]
    ReplayMiss { operation: Operation, key: String },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("input text is empty")]
    EmptyInput,
    #[error("operation {0} is not supported by this backend")]
    Unsupported(Operation),
    #[error("classification failed for paper {doc_id}: {source}")]
    Classification {
        doc_id: String,
        #[source]
        source: Box<ModelError>,
    },
    #[error("transcript store {path}: {message}")]
    Store { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Classify,
    Extract,
    Aggregate,
    Embed,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::Classify => "classify",
            Operation::Extract => "extract",
            Operation::Aggregate => "aggregate",
            Operation::Embed => "embed",
        })
    }
}

/// A paper as it enters the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperDoc {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub full_text: String,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub declared_type: Option<PaperType>,
}

impl PaperDoc {
    pub fn new(id: &str, title: &str, abstract_text: &str, full_text: &str) -> Self {
        PaperDoc {
            id: id.to_string(),
            title: title.to_string(),
            abstract_text: abstract_text.to_string(),
            full_text: full_text.to_string(),
            declared_type: None,
        }
    }

    pub fn with_type(mut self, paper_type: PaperType) -> Self {
        self.declared_type = Some(paper_type);
        self
    }

    /// Text handed to the extractor: title, abstract and body.
    pub fn source_text(&self) -> String {
        format!("{}\n\n{}\n\n{}", self.title, self.abstract_text, self.full_text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    /// Cosine similarity; zero if either vector has zero norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            dot / denom
        }
    }
}

/// One child handed to aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildContent {
    pub name: String,
    pub description: String,
    pub content: String,
}

impl ChildContent {
    pub fn new(name: &str, description: &str, content: &str) -> Self {
        ChildContent {
            name: name.to_string(),
            description: description.to_string(),
            content: content.to_string(),
        }
    }
}

/// A generative request in structured form. Backends may answer from the
/// rendered prompt (remote), its key (replay) or the fields (fixture).
#[derive(Debug, Clone, Copy)]
pub enum ModelRequest<'a> {
    Classify {
        abstract_text: &'a str,
    },
    Extract {
        doc: &'a PaperDoc,
        node: &'a SchemaNode,
        path: &'a NodePath,
    },
    Aggregate {
        parent: &'a SchemaNode,
        path: &'a NodePath,
        children: &'a [ChildContent],
    },
}

impl ModelRequest<'_> {
    pub fn operation(&self) -> Operation {
        match self {
            ModelRequest::Classify { .. } => Operation::Classify,
            ModelRequest::Extract { .. } => Operation::Extract,
            ModelRequest::Aggregate { .. } => Operation::Aggregate,
        }
    }

    pub fn prompt(&self) -> String {
        match *self {
            ModelRequest::Classify { abstract_text } => prompts::classify(abstract_text),
            ModelRequest::Extract { doc, node, path } => prompts::extract(&doc.source_text(), node, path),
            ModelRequest::Aggregate { parent, children, .. } => prompts::aggregate(parent, children),
        }
    }

    pub fn key(&self) -> String {
        request_key(self.operation(), &self.prompt())
    }
}

/// Stable hash of an operation and its full input.
pub fn request_key(operation: Operation, input: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(operation.to_string().as_bytes());
    hasher.update(b"\n");
    hasher.update(input.as_bytes());
    hex::encode(hasher.finalize())
}

pub trait ModelBackend: Send + Sync {
    /// Raw textual reply to a generative request.
    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, ModelError>;

    fn embed(&self, text: &str) -> Result<Vec<f32>, ModelError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Extracted or aggregated content longer than this many characters is truncated.
    pub max_content_chars: usize,
    pub embedding_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            max_content_chars: 4000,
            embedding_dim: 64,
        }
    }
}

/// Per-operation call counters plus warning records.
#[derive(Debug, Default)]
pub struct ModelStats {
    calls: [AtomicUsize; 4],
    warnings: Mutex<Vec<String>>,
}

impl ModelStats {
    fn bump(&self, op: Operation) {
        self.calls[op as usize].fetch_add(1, Ordering::SeqCst);
    }

    pub fn calls(&self, op: Operation) -> usize {
        self.calls[op as usize].load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.iter().map(|c| c.load(Ordering::SeqCst)).sum()
    }

    pub fn snapshot(&self) -> BTreeMap<Operation, usize> {
        [Operation::Classify, Operation::Extract, Operation::Aggregate, Operation::Embed]
            .into_iter()
            .map(|op| (op, self.calls(op)))
            .collect()
    }

    pub fn warn(&self, message: String) {
        tracing::warn!("{message}");
        self.warnings.lock().expect("warnings lock").push(message);
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("warnings lock").clone()
    }
}

pub struct ContentModel {
    backend: Arc<dyn ModelBackend>,
    config: ModelConfig,
    stats: ModelStats,
}

impl ContentModel {
    pub fn new(backend: Arc<dyn ModelBackend>, config: ModelConfig) -> Self {
        ContentModel {
            backend,
            config,
            stats: ModelStats::default(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stats(&self) -> &ModelStats {
        &self.stats
    }

    pub fn classify_paper_type(&self, doc: &PaperDoc) -> Result<PaperType, ModelError> {
        if let Some(declared) = doc.declared_type {
            return Ok(declared);
        }
        if doc.abstract_text.trim().is_empty() {
            return Err(ModelError::Classification {
                doc_id: doc.id.clone(),
                source: Box::new(ModelError::EmptyInput),
            });
        }
        self.stats.bump(Operation::Classify);
        let reply = self
            .backend
            .complete(&ModelRequest::Classify {
                abstract_text: &doc.abstract_text,
            })
            .map_err(|e| ModelError::Classification {
                doc_id: doc.id.clone(),
                source: Box::new(e),
            })?;
        Ok(normalize_paper_type(&reply).unwrap_or_else(|| {
            self.stats.warn(format!(
                "paper {}: unparseable classification reply {reply:?}, defaulting to {}",
                doc.id,
                PaperType::AlgorithmInnovation
            ));
            PaperType::AlgorithmInnovation
        }))
    }

    /// Content for a leaf node; `""` means the paper has nothing for it.
    pub fn extract_leaf_content(
        &self,
        doc: &PaperDoc,
        node: &SchemaNode,
        path: &NodePath,
    ) -> Result<String, ModelError> {
        self.stats.bump(Operation::Extract);
        let reply = self.backend.complete(&ModelRequest::Extract { doc, node, path })?;
        let content = parse_json_reply(&reply, &["node_value", node.name.as_str()]).unwrap_or_else(|| {
            self.stats.warn(format!(
                "paper {} {path}: extraction reply is not JSON, using raw text",
                doc.id
            ));
            strip_fences(&reply).to_string()
        });
        Ok(self.truncate(content, &format!("paper {} {path}", doc.id)))
    }

    /// Summary of the given children. Returns `""` without a model call when
    /// every child is empty; only non-empty children reach the model.
    pub fn aggregate_contents(
        &self,
        parent: &SchemaNode,
        path: &NodePath,
        children: &[ChildContent],
    ) -> Result<String, ModelError> {
        let present: Vec<ChildContent> = children
            .iter()
            .filter(|c| !c.content.trim().is_empty())
            .cloned()
            .collect();
        if present.is_empty() {
            return Ok(String::new());
        }
        self.stats.bump(Operation::Aggregate);
        let reply = self.backend.complete(&ModelRequest::Aggregate {
            parent,
            path,
            children: &present,
        })?;
        let content = parse_json_reply(&reply, &["root_value"]).unwrap_or_else(|| {
            self.stats
                .warn(format!("{path}: aggregation reply is not JSON, using raw text"));
            strip_fences(&reply).to_string()
        });
        Ok(self.truncate(content, &path.to_string()))
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, ModelError> {
        if text.trim().is_empty() {
            return Err(ModelError::EmptyInput);
        }
        self.stats.bump(Operation::Embed);
        let values = self.backend.embed(text)?;
        if values.len() != self.config.embedding_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.embedding_dim,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(EmbeddingVector::new(values))
    }

    fn truncate(&self, content: String, context: &str) -> String {
        let content = content.trim().to_string();
        let limit = self.config.max_content_chars;
        if content.chars().count() <= limit {
            return content;
        }
        self.stats
            .warn(format!("{context}: content exceeds {limit} characters, truncated"));
        content.chars().take(limit).collect()
    }
}

/// Maps a free-text classification reply onto a paper type.
pub fn normalize_paper_type(reply: &str) -> Option<PaperType> {
    let normalized: String = reply
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    const TABLE: [(&str, PaperType); 12] = [
        ("algorithm innovation", PaperType::AlgorithmInnovation),
        ("benchmark construction", PaperType::BenchmarkConstruction),
        ("mechanism exploration", PaperType::MechanismExploration),
        ("survey and review", PaperType::Survey),
        ("theory proof", PaperType::TheoryProof),
        ("algorithm", PaperType::AlgorithmInnovation),
        ("benchmark", PaperType::BenchmarkConstruction),
        ("mechanism", PaperType::MechanismExploration),
        ("survey", PaperType::Survey),
        ("review", PaperType::Survey),
        ("theory", PaperType::TheoryProof),
        ("proof", PaperType::TheoryProof),
    ];
    if let Some((_, ty)) = TABLE.iter().find(|(label, _)| normalized == *label) {
        return Some(*ty);
    }
    let snake = normalized.replace(' ', "_");
    if let Ok(ty) = snake.parse::<PaperType>() {
        return Some(ty);
    }
    // Otherwise the earliest full label mentioned anywhere in the reply.
    TABLE[..5]
        .iter()
        .filter_map(|(label, ty)| normalized.find(label).map(|pos| (pos, *ty)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, ty)| ty)
}

fn strip_fences(reply: &str) -> &str {
    let trimmed = reply.trim();
    let body = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .unwrap_or(trimmed);
    body.strip_suffix("```").unwrap_or(body).trim()
}

/// Pulls a string field out of a (possibly fenced) JSON reply.
fn parse_json_reply(reply: &str, fields: &[&str]) -> Option<String> {
    let body = match reply.find("```json") {
        Some(start) => {
            let rest = &reply[start + 7..];
            &rest[..rest.find("```").unwrap_or(rest.len())]
        }
        None => strip_fences(reply),
    };
    let value: serde_json::Value = serde_json::from_str(body.trim()).ok()?;
    let obj = value.as_object()?;
    for field in fields {
        match obj.get(*field) {
            Some(serde_json::Value::String(s)) => return Some(s.clone()),
            Some(serde_json::Value::Null) => return Some(String::new()),
            _ => {}
        }
    }
    None
}
