//! Per-paper hierarchical registers: classify, extract every leaf, then
//! aggregate upward one depth at a time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::index::{Bm25Params, LexicalIndex};
use crate::model::{ChildContent, ContentModel, ModelError, PaperDoc};
use crate::schema::{NodePath, PaperType, RegisterSchema, SchemaNode, SchemaSet};
use crate::tokenize::Tokenizer;

#[derive(Debug, thiserror::Error)]
pub enum RegisterError {
    #[error("paper {paper_id}: classification failed: {source}")]
    Classify {
        paper_id: String,
        #[source]
        source: ModelError,
    },
    #[error("paper {paper_id} at {path}: {source}")]
    Node {
        paper_id: String,
        path: String,
        #[source]
        source: ModelError,
    },
    #[error("duplicate paper id {0:?}")]
    DuplicateId(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl RegisterError {
    fn node(paper_id: &str, path: &NodePath, source: ModelError) -> Self {
        RegisterError::Node {
            paper_id: paper_id.to_string(),
            path: path.to_string(),
            source,
        }
    }
}

/// One content string per schema path of the paper's type, empties included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchicalRegister {
    pub paper_id: String,
    pub paper_type: PaperType,
    pub schema_version: String,
    pub contents: BTreeMap<NodePath, String>,
}

impl HierarchicalRegister {
    pub fn content(&self, path: &NodePath) -> Option<&str> {
        self.contents.get(path).map(String::as_str)
    }

    /// Paths of `schema` missing from the register, and keys the schema does not know.
    pub fn coverage_gaps(&self, schema: &RegisterSchema) -> (Vec<NodePath>, Vec<NodePath>) {
        let expected: BTreeSet<NodePath> = schema.all_paths().into_iter().collect();
        let missing = expected.iter().filter(|p| !self.contents.contains_key(*p)).cloned().collect();
        let unknown = self.contents.keys().filter(|p| !expected.contains(*p)).cloned().collect();
        (missing, unknown)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("register serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnExtractError {
    #[default]
    Fail,
    Blank,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub on_extract_error: OnExtractError,
    /// Extra attempts per node after a model error.
    pub node_retries: u32,
    /// Append the best-matching source paragraph to each extracted leaf.
    pub enrich_with_source: bool,
    pub max_parallel_papers: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            on_extract_error: OnExtractError::Fail,
            node_retries: 1,
            enrich_with_source: false,
            max_parallel_papers: 4,
        }
    }
}

fn with_retries<T>(retries: u32, mut f: impl FnMut() -> Result<T, ModelError>) -> Result<T, ModelError> {
    let mut attempt = 0;
    loop {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if attempt < retries => {
                tracing::debug!(attempt, error = %e, "retrying node");
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn paragraphs(text: &str) -> Vec<&str> {
    text.split("\n\n").map(str::trim).filter(|p| !p.is_empty()).collect()
}

fn enrich(content: &str, full_text: &str) -> String {
    let paras = paragraphs(full_text);
    let index = LexicalIndex::build(
        paras.iter().map(|p| ("", *p)),
        Tokenizer::default(),
        Bm25Params::default(),
    );
    match index.top1(content) {
        Some((best, _)) if !content.contains(paras[best]) => format!("{content}\n\n{}", paras[best]),
        _ => content.to_string(),
    }
}

/// Builds the register of one paper.
pub fn build_register(
    doc: &PaperDoc,
    schemas: &SchemaSet,
    model: &ContentModel,
    config: &BuildConfig,
) -> Result<HierarchicalRegister, RegisterError> {
    let paper_type = model
        .classify_paper_type(doc)
        .map_err(|source| RegisterError::Classify {
            paper_id: doc.id.clone(),
            source,
        })?;
    let schema = schemas.get(paper_type);
    let nodes = schema.walk();
    let mut contents: BTreeMap<NodePath, String> = BTreeMap::new();

    let recover = |path: &NodePath, result: Result<String, ModelError>| match result {
        Ok(c) => Ok(c),
        Err(e) if config.on_extract_error == OnExtractError::Blank => {
            model
                .stats()
                .warn(format!("paper {} {path}: {e}; recorded as empty", doc.id));
            Ok(String::new())
        }
        Err(e) => Err(RegisterError::node(&doc.id, path, e)),
    };

    for (path, node) in nodes.iter().filter(|(_, n)| n.is_leaf()) {
        let extracted = with_retries(config.node_retries, || model.extract_leaf_content(doc, node, path));
        let mut content = recover(path, extracted)?;
        if config.enrich_with_source && !content.is_empty() && !doc.full_text.trim().is_empty() {
            content = enrich(&content, &doc.full_text);
        }
        contents.insert(path.clone(), content);
    }

    let mut internal: Vec<&(NodePath, &SchemaNode)> = nodes.iter().filter(|(_, n)| !n.is_leaf()).collect();
    // deepest first; pre-order within a depth
    internal.sort_by_key(|(p, _)| std::cmp::Reverse(p.len()));
    for (path, node) in internal {
        let children: Vec<ChildContent> = node
            .children
            .iter()
            .map(|c| {
                let content = &contents[&path.child(&c.name)];
                ChildContent::new(&c.name, &c.description, content)
            })
            .collect();
        let aggregated = with_retries(config.node_retries, || model.aggregate_contents(node, path, &children));
        let content = recover(path, aggregated)?;
        contents.insert(path.clone(), content);
    }

    Ok(HierarchicalRegister {
        paper_id: doc.id.clone(),
        paper_type,
        schema_version: schema.version.clone(),
        contents,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PaperFailure {
    pub paper_id: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct CorpusBuild {
    /// Successful registers in corpus order.
    pub registers: Vec<HierarchicalRegister>,
    pub failures: Vec<PaperFailure>,
    /// Registers taken over from a previous store without model calls.
    pub reused: usize,
}

fn reusable<'a>(
    doc: &PaperDoc,
    previous: &HashMap<&str, &'a HierarchicalRegister>,
    schemas: &SchemaSet,
) -> Option<&'a HierarchicalRegister> {
    let prev = previous.get(doc.id.as_str())?;
    let type_ok = doc.declared_type.is_none_or(|t| t == prev.paper_type);
    (type_ok && schemas.get(prev.paper_type).version == prev.schema_version).then_some(*prev)
}

/// Builds registers for a whole corpus with bounded per-paper parallelism.
/// Registers in `previous` whose (paper_id, schema_version) still match are reused.
pub fn build_corpus_registers(
    corpus: &[PaperDoc],
    schemas: &SchemaSet,
    model: &ContentModel,
    config: &BuildConfig,
    previous: &[HierarchicalRegister],
) -> Result<CorpusBuild, RegisterError> {
    let mut ids = BTreeSet::new();
    for doc in corpus {
        if !ids.insert(doc.id.as_str()) {
            return Err(RegisterError::DuplicateId(doc.id.clone()));
        }
    }
    let previous: HashMap<&str, &HierarchicalRegister> = previous.iter().map(|r| (r.paper_id.as_str(), r)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_parallel_papers.max(1))
        .build()
        .map_err(|e| RegisterError::Pool(e.to_string()))?;

    let results: Vec<(Result<HierarchicalRegister, RegisterError>, bool)> = pool.install(|| {
        corpus
            .par_iter()
            .map(|doc| match reusable(doc, &previous, schemas) {
                Some(prev) => (Ok(prev.clone()), true),
                None => (build_register(doc, schemas, model, config), false),
            })
            .collect()
    });

    let mut out = CorpusBuild::default();
    for (doc, (result, reused)) in corpus.iter().zip(results) {
        match result {
            Ok(reg) => {
                out.reused += usize::from(reused);
                out.registers.push(reg);
            }
            Err(e) => {
                tracing::warn!(paper_id = %doc.id, error = %e, "register build failed");
                out.failures.push(PaperFailure {
                    paper_id: doc.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// One paper per line: `{id, title, abstract, full_text, type?}`. Errors name the offending line.
pub fn read_corpus(path: &Path) -> Result<Vec<PaperDoc>, RegisterError> {
    read_jsonl(path)
}

pub fn write_corpus(path: &Path, docs: &[PaperDoc]) -> Result<(), RegisterError> {
    let io = |source| RegisterError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    for doc in docs {
        writeln!(buf, "{}", serde_json::to_string(doc).expect("paper serializes")).map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RegisterError> {
    let io = |source| RegisterError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| RegisterError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_registers(path: &Path) -> Result<Vec<HierarchicalRegister>, RegisterError> {
    read_jsonl(path)
}

pub fn write_registers(path: &Path, registers: &[HierarchicalRegister]) -> Result<(), RegisterError> {
    let io = |source| RegisterError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    for reg in registers {
        writeln!(buf, "{}", reg.to_json_line()).map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)
}
