//! On-disk index directory.
//!
//! Layout: `manifest.json` plus one little-endian binary file per view. The
//! manifest records the sha256 of every view file; any mismatch on load is
//! reported as corruption.
//!
//! View file layout:
//!
//! ```text
//! magic "RDXV" | u32 format | u8 kind | str view | u32 n_docs | n_docs × str id
//! lexical: n_docs × u32 doc_len | u32 n_terms | n_terms × (str term | u32 n | n × (u32 doc, u32 tf))
//! dense:   u32 dim | n_docs × dim × f32
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Bm25Params, DenseIndex, IndexError, IndexKind, IndexTree, LexicalIndex, Posting, ViewBody, ViewIndex};
use crate::model::EmbeddingVector;
use crate::schema::{NodePath, PaperType};
use crate::tokenize::Tokenizer;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RDXV";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestView {
    pub path: NodePath,
    pub file: String,
    pub doc_count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub kind: IndexKind,
    pub schema_versions: BTreeMap<PaperType, String>,
    pub tokenizer: Tokenizer,
    pub bm25: Bm25Params,
    pub dimension: usize,
    pub corpus_ids: Vec<String>,
    pub views: Vec<ManifestView>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn sanitize(path: &NodePath) -> String {
    path.to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> IndexError {
        IndexError::Corruption {
            file: self.file.to_string(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(format!("truncated at byte {}", self.pos)));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, IndexError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn str(&mut self) -> Result<String, IndexError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.corrupt("invalid utf-8"))
    }

    fn count(&mut self, what: &str) -> Result<usize, IndexError> {
        let n = self.u32()? as usize;
        // every counted item takes at least 4 bytes
        if n > (self.bytes.len() - self.pos) / 4 + 1 {
            return Err(self.corrupt(format!("implausible {what} count {n}")));
        }
        Ok(n)
    }
}

fn encode_view(view: &ViewIndex) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(match view.kind() {
        IndexKind::Lexical => 0,
        IndexKind::Dense => 1,
    });
    w.str(&view.view.to_string());
    w.u32(view.doc_count() as u32);
    for id in view.doc_ids() {
        w.str(id);
    }
    match &view.body {
        ViewBody::Lexical(ix) => {
            for &len in &ix.doc_lens {
                w.u32(len);
            }
            w.u32(ix.postings.len() as u32);
            for (term, postings) in &ix.postings {
                w.str(term);
                w.u32(postings.len() as u32);
                for p in postings {
                    w.u32(p.doc);
                    w.u32(p.tf);
                }
            }
        }
        ViewBody::Dense(ix) => {
            w.u32(ix.dimension as u32);
            for v in &ix.vectors {
                for &x in &v.values {
                    w.f32(x);
                }
            }
        }
    }
    w.0
}

fn decode_view(bytes: &[u8], file: &str, tokenizer: Tokenizer, bm25: Bm25Params) -> Result<ViewIndex, IndexError> {
    let mut r = Reader { bytes, pos: 0, file };
    if r.take(4)? != MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(IndexError::FormatVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let kind = r.u8()?;
    let view_str = r.str()?;
    let view = NodePath::parse(&view_str).ok_or_else(|| r.corrupt(format!("bad view path {view_str:?}")))?;
    let n_docs = r.count("document")?;
    let doc_ids = (0..n_docs).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
    let body = match kind {
        0 => {
            let doc_lens = (0..n_docs).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            let n_terms = r.count("term")?;
            let mut postings = BTreeMap::new();
            for _ in 0..n_terms {
                let term = r.str()?;
                let n = r.count("posting")?;
                let mut list = Vec::with_capacity(n);
                for _ in 0..n {
                    let doc = r.u32()?;
                    let tf = r.u32()?;
                    if doc as usize >= n_docs {
                        return Err(r.corrupt(format!("posting references document {doc}")));
                    }
                    list.push(Posting { doc, tf });
                }
                postings.insert(term, list);
            }
            ViewBody::Lexical(LexicalIndex {
                doc_ids,
                doc_lens,
                postings,
                params: bm25,
                tokenizer,
            })
        }
        1 => {
            let dimension = r.u32()? as usize;
            let mut vectors = Vec::with_capacity(n_docs);
            for _ in 0..n_docs {
                let values = (0..dimension).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
                vectors.push(EmbeddingVector::new(values));
            }
            ViewBody::Dense(DenseIndex {
                dimension,
                doc_ids,
                vectors,
            })
        }
        other => return Err(r.corrupt(format!("unknown kind tag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(r.corrupt("trailing bytes"));
    }
    Ok(ViewIndex { view, body })
}

/// Writes the tree into `dir`, replacing any index already there.
/// Returns the sha256 of the written manifest.
pub fn save_index(tree: &IndexTree, dir: &Path) -> Result<String, IndexError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "bin") {
            std::fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }
    let mut views = Vec::with_capacity(tree.views.len());
    for (i, (path, view)) in tree.views.iter().enumerate() {
        let file = format!("v{i:04}_{}.bin", sanitize(path));
        let bytes = encode_view(view);
        let target = dir.join(&file);
        std::fs::write(&target, &bytes).map_err(io_err(&target))?;
        views.push(ManifestView {
            path: path.clone(),
            file,
            doc_count: view.doc_count(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = IndexManifest {
        format_version: FORMAT_VERSION,
        kind: tree.kind,
        schema_versions: tree.schema_versions.clone(),
        tokenizer: tree.tokenizer,
        bm25: tree.bm25,
        dimension: tree.dimension,
        corpus_ids: tree.corpus_ids.clone(),
        views,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let target = dir.join(MANIFEST_FILE);
    std::fs::write(&target, &text).map_err(io_err(&target))?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn read_manifest(dir: &Path) -> Result<IndexManifest, IndexError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: IndexManifest = serde_json::from_str(&text).map_err(|e| IndexError::Corruption {
        file: MANIFEST_FILE.into(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(IndexError::FormatVersion {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

/// Loads an index directory. When `expected_versions` is given, the index
/// must have been built against exactly those schema versions.
pub fn load_index(
    dir: &Path,
    expected_versions: Option<&BTreeMap<PaperType, String>>,
) -> Result<IndexTree, IndexError> {
    let manifest = read_manifest(dir)?;
    if let Some(expected) = expected_versions {
        if *expected != manifest.schema_versions {
            let show = |m: &BTreeMap<PaperType, String>| m.values().cloned().collect::<Vec<_>>().join(",");
            return Err(IndexError::SchemaVersion {
                found: show(&manifest.schema_versions),
                expected: show(expected),
            });
        }
    }
    let mut views = BTreeMap::new();
    for entry in &manifest.views {
        let path = dir.join(&entry.file);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(IndexError::Corruption {
                file: entry.file.clone(),
                reason: "checksum mismatch".into(),
            });
        }
        let view = decode_view(&bytes, &entry.file, manifest.tokenizer, manifest.bm25)?;
        if view.view != entry.path || view.doc_count() != entry.doc_count || view.kind() != manifest.kind {
            return Err(IndexError::Corruption {
                file: entry.file.clone(),
                reason: "contents disagree with manifest".into(),
            });
        }
        views.insert(view.view.clone(), view);
    }
    Ok(IndexTree {
        kind: manifest.kind,
        schema_versions: manifest.schema_versions,
        views,
        corpus_ids: manifest.corpus_ids,
        tokenizer: manifest.tokenizer,
        bm25: manifest.bm25,
        dimension: manifest.dimension,
        skipped: Vec::new(),
    })
}
