//! The hierarchical index tree: one searchable index per view over the whole corpus.

mod bm25;
mod dense;
mod persist;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bm25::{Bm25Params, LexicalIndex, Posting};
pub use dense::DenseIndex;
pub use persist::{load_index, save_index, IndexManifest, ManifestView, MANIFEST_FILE};

use crate::model::{ContentModel, EmbeddingVector, ModelError};
use crate::register::HierarchicalRegister;
use crate::schema::{NodePath, PaperType, SchemaSet};
use crate::tokenize::Tokenizer;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("no registers to index")]
    NoRegisters,
    #[error("duplicate paper id {0:?}")]
    DuplicateId(String),
    #[error("paper {paper_id}: view {path} is not valid for {paper_type}")]
    InvalidView {
        paper_id: String,
        paper_type: PaperType,
        path: String,
    },
    #[error("paper {paper_id}: register built with schema {found}, expected {expected}")]
    StaleRegister {
        paper_id: String,
        found: String,
        expected: String,
    },
    #[error("embedding failed for paper {paper_id} at {path}: {source}")]
    Embedding {
        paper_id: String,
        path: String,
        #[source]
        source: ModelError,
    },
    #[error("dense index requires an embedding model")]
    MissingModel,
    #[error("vector dimension {actual} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("query representation does not match a {0} index")]
    KindMismatch(IndexKind),
    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("index built for schema versions {found}, current schemas are {expected}")]
    SchemaVersion { found: String, expected: String },
    #[error("corrupt index file {file}: {reason}")]
    Corruption { file: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Lexical,
    Dense,
}

impl std::fmt::Display for IndexKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IndexKind::Lexical => "lexical",
            IndexKind::Dense => "dense",
        })
    }
}

impl std::str::FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lexical" | "bm25" => Ok(IndexKind::Lexical),
            "dense" => Ok(IndexKind::Dense),
            other => Err(format!("unknown index kind {other:?} (expected lexical or dense)")),
        }
    }
}

/// A query prepared once for scoring against any number of views.
#[derive(Debug, Clone)]
pub enum PreparedQuery {
    Tokens(Vec<String>),
    Vector(EmbeddingVector),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewBody {
    Lexical(LexicalIndex),
    Dense(DenseIndex),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewIndex {
    pub view: NodePath,
    pub body: ViewBody,
}

impl ViewIndex {
    pub fn kind(&self) -> IndexKind {
        match self.body {
            ViewBody::Lexical(_) => IndexKind::Lexical,
            ViewBody::Dense(_) => IndexKind::Dense,
        }
    }

    pub fn doc_count(&self) -> usize {
        match &self.body {
            ViewBody::Lexical(ix) => ix.doc_count(),
            ViewBody::Dense(ix) => ix.doc_count(),
        }
    }

    pub fn doc_ids(&self) -> &[String] {
        match &self.body {
            ViewBody::Lexical(ix) => ix.doc_ids(),
            ViewBody::Dense(ix) => ix.doc_ids(),
        }
    }

    /// Relevance of every indexed paper; papers blank at this view are absent.
    pub fn scores(&self, query: &PreparedQuery) -> Result<BTreeMap<String, f64>, IndexError> {
        match (&self.body, query) {
            (ViewBody::Lexical(ix), PreparedQuery::Tokens(tokens)) => Ok(ix
                .doc_ids()
                .iter()
                .cloned()
                .zip(ix.score_tokens(tokens))
                .collect()),
            (ViewBody::Dense(ix), PreparedQuery::Vector(v)) => ix.scores(v),
            _ => Err(IndexError::KindMismatch(self.kind())),
        }
    }

    pub fn lexical_scores(&self, query: &str) -> Result<BTreeMap<String, f64>, IndexError> {
        match &self.body {
            ViewBody::Lexical(ix) => Ok(ix.scores(query)),
            ViewBody::Dense(_) => Err(IndexError::KindMismatch(IndexKind::Dense)),
        }
    }

    pub fn dense_scores(&self, query: &EmbeddingVector) -> Result<BTreeMap<String, f64>, IndexError> {
        match &self.body {
            ViewBody::Dense(ix) => ix.scores(query),
            ViewBody::Lexical(_) => Err(IndexError::KindMismatch(IndexKind::Lexical)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnEmbedError {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IndexOptions {
    pub tokenizer: Tokenizer,
    pub bm25: Bm25Params,
    pub on_embed_error: OnEmbedError,
}

#[derive(Debug, Clone)]
pub struct IndexTree {
    pub kind: IndexKind,
    pub schema_versions: BTreeMap<PaperType, String>,
    pub views: BTreeMap<NodePath, ViewIndex>,
    pub corpus_ids: Vec<String>,
    pub tokenizer: Tokenizer,
    pub bm25: Bm25Params,
    /// Embedding dimension of dense trees, 0 otherwise.
    pub dimension: usize,
    /// `(paper_id, path, reason)` for contents left out after embedding failures.
    pub skipped: Vec<(String, String, String)>,
}

impl IndexTree {
    pub fn empty(kind: IndexKind, schemas: &SchemaSet, options: IndexOptions) -> Self {
        IndexTree {
            kind,
            schema_versions: schemas.versions(),
            views: BTreeMap::new(),
            corpus_ids: Vec::new(),
            tokenizer: options.tokenizer,
            bm25: options.bm25,
            dimension: 0,
            skipped: Vec::new(),
        }
    }

    pub fn view(&self, path: &NodePath) -> Option<&ViewIndex> {
        self.views.get(path)
    }

    pub fn doc_counts(&self) -> BTreeMap<NodePath, usize> {
        self.views.iter().map(|(p, v)| (p.clone(), v.doc_count())).collect()
    }

    pub fn prepare_query(&self, query: &str, model: Option<&ContentModel>) -> Result<PreparedQuery, IndexError> {
        match self.kind {
            IndexKind::Lexical => Ok(PreparedQuery::Tokens(self.tokenizer.tokenize(query))),
            IndexKind::Dense => {
                let model = model.ok_or(IndexError::MissingModel)?;
                let vector = model.embed(query).map_err(|source| IndexError::Embedding {
                    paper_id: "<query>".into(),
                    path: String::new(),
                    source,
                })?;
                Ok(PreparedQuery::Vector(vector))
            }
        }
    }
}

/// Merges per-paper registers into one index per view.
pub fn build_index_tree(
    registers: &[HierarchicalRegister],
    schemas: &SchemaSet,
    kind: IndexKind,
    model: Option<&ContentModel>,
    options: IndexOptions,
) -> Result<IndexTree, IndexError> {
    if registers.is_empty() {
        return Err(IndexError::NoRegisters);
    }
    let mut seen = BTreeSet::new();
    let mut per_view: BTreeMap<&NodePath, Vec<(&str, &str)>> = BTreeMap::new();
    for reg in registers {
        if !seen.insert(reg.paper_id.as_str()) {
            return Err(IndexError::DuplicateId(reg.paper_id.clone()));
        }
        let schema = schemas.get(reg.paper_type);
        if reg.schema_version != schema.version {
            return Err(IndexError::StaleRegister {
                paper_id: reg.paper_id.clone(),
                found: reg.schema_version.clone(),
                expected: schema.version.clone(),
            });
        }
        for (path, content) in &reg.contents {
            if !schema.validate_path(path) {
                return Err(IndexError::InvalidView {
                    paper_id: reg.paper_id.clone(),
                    paper_type: reg.paper_type,
                    path: path.to_string(),
                });
            }
            if !content.trim().is_empty() {
                per_view.entry(path).or_default().push((&reg.paper_id, content));
            }
        }
    }

    let dimension = match kind {
        IndexKind::Lexical => 0,
        IndexKind::Dense => model.ok_or(IndexError::MissingModel)?.config().embedding_dim,
    };

    type Built = (ViewIndex, Vec<(String, String, String)>);
    let built: Vec<Built> = per_view
        .into_par_iter()
        .map(|(path, docs)| -> Result<Built, IndexError> {
            match kind {
                IndexKind::Lexical => Ok((
                    ViewIndex {
                        view: path.clone(),
                        body: ViewBody::Lexical(LexicalIndex::build(docs, options.tokenizer, options.bm25)),
                    },
                    Vec::new(),
                )),
                IndexKind::Dense => {
                    let model = model.ok_or(IndexError::MissingModel)?;
                    let mut index = DenseIndex::new(dimension);
                    let mut skipped = Vec::new();
                    for (id, content) in docs {
                        match model.embed(content) {
                            Ok(v) => index.push(id, v)?,
                            Err(source) if options.on_embed_error == OnEmbedError::Skip => {
                                tracing::warn!(paper_id = id, path = %path, error = %source, "skipping content");
                                skipped.push((id.to_string(), path.to_string(), source.to_string()));
                            }
                            Err(source) => {
                                return Err(IndexError::Embedding {
                                    paper_id: id.to_string(),
                                    path: path.to_string(),
                                    source,
                                })
                            }
                        }
                    }
                    let view = ViewIndex {
                        view: path.clone(),
                        body: ViewBody::Dense(index),
                    };
                    Ok((view, skipped))
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let mut views = BTreeMap::new();
    let mut skipped = Vec::new();
    for (view, mut s) in built {
        skipped.append(&mut s);
        if view.doc_count() > 0 {
            views.insert(view.view.clone(), view);
        }
    }
    Ok(IndexTree {
        kind,
        schema_versions: schemas.versions(),
        views,
        corpus_ids: registers.iter().map(|r| r.paper_id.clone()).collect(),
        tokenizer: options.tokenizer,
        bm25: options.bm25,
        dimension,
        skipped,
    })
}
