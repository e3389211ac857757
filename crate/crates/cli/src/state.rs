//! Loaded, immutable search state shared by `search`, `identify` and the HTTP service.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use registerdex::index::{load_index, IndexKind, IndexTree};
use registerdex::model::ContentModel;
use registerdex::recognizer::{identify, Recognizer, RecognizerOutput};
use registerdex::register::{read_corpus, read_registers, HierarchicalRegister};
use registerdex::retrieval::{SearchError, SearchResult, Searcher};
use registerdex::schema::{NodePath, SchemaSet};

use crate::runtime::Runtime;

const SNIPPET_CHARS: usize = 240;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub kind: Option<IndexKind>,
    /// Explicit views; skips the recognizer.
    #[serde(default)]
    pub views: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub paper_id: String,
    pub title: String,
    pub score: f64,
    pub best_view: Option<String>,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub views_used: Vec<String>,
    pub results: Vec<Hit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifyRequest {
    pub query: String,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyResponse {
    pub views: Vec<String>,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl std::error::Error for ApiError {}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApiError::BadRequest(m) | ApiError::NotFound(m) | ApiError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Bound(_) => ApiError::BadRequest(e.to_string()),
            SearchError::Recognizer(ref r) if matches!(r, registerdex::recognizer::RecognizerError::EmptyQuery) => {
                ApiError::BadRequest(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

pub struct SearchState {
    pub tree: IndexTree,
    pub schemas: SchemaSet,
    pub registers: HashMap<String, HierarchicalRegister>,
    pub titles: HashMap<String, String>,
    pub recognizer: Box<dyn Recognizer>,
    /// Needed to embed queries against a dense index.
    pub model: Option<ContentModel>,
    pub k: usize,
    pub m: usize,
    pub normalize: bool,
}

impl SearchState {
    /// Loads the index (checked against the current schema versions), plus the
    /// register store and corpus titles when they exist.
    pub fn load(rt: &Runtime) -> anyhow::Result<Self> {
        let c = &rt.config;
        crate::config::require_exists(&c.index_dir, "index directory")?;
        let tree = load_index(&c.index_dir, Some(&rt.schemas.versions()))?;
        let registers = if c.registers.exists() {
            read_registers(&c.registers)?.into_iter().map(|r| (r.paper_id.clone(), r)).collect()
        } else {
            tracing::warn!(path = %c.registers.display(), "register store missing; snippets will be empty");
            HashMap::new()
        };
        let titles = if c.corpus.exists() {
            read_corpus(&c.corpus)?.into_iter().map(|d| (d.id, d.title)).collect()
        } else {
            HashMap::new()
        };
        let model = match tree.kind {
            IndexKind::Dense => Some(rt.model()?.model),
            IndexKind::Lexical => None,
        };
        Ok(SearchState {
            tree,
            schemas: rt.schemas.clone(),
            registers,
            titles,
            recognizer: rt.recognizer()?,
            model,
            k: c.k,
            m: c.m,
            normalize: c.normalize,
        })
    }

    fn searcher(&self) -> Searcher<'_> {
        let mut s = Searcher::new(&self.tree).normalized(self.normalize);
        s.model = self.model.as_ref();
        s
    }

    fn explicit_views(&self, paths: &[String]) -> Result<RecognizerOutput, ApiError> {
        let catalog = self.recognizer.catalog();
        let mut views = Vec::new();
        for raw in paths {
            let view = NodePath::parse(raw)
                .and_then(|p| catalog.view(&p).cloned())
                .ok_or_else(|| ApiError::BadRequest(format!("unknown view {raw:?}")))?;
            if !views.contains(&view) {
                views.push(view);
            }
        }
        if views.is_empty() {
            return Err(ApiError::BadRequest("views must not be empty".into()));
        }
        Ok(RecognizerOutput { views, scores: None })
    }

    pub fn run(&self, req: &SearchRequest) -> Result<SearchResult, ApiError> {
        if let Some(kind) = req.kind {
            if kind != self.tree.kind {
                return Err(ApiError::BadRequest(format!("loaded index is {}, not {kind}", self.tree.kind)));
            }
        }
        if req.query.trim().is_empty() {
            return Err(ApiError::BadRequest("query is empty".into()));
        }
        let k = req.k.unwrap_or(self.k);
        let m = req.m.unwrap_or(self.m);
        let result = match &req.views {
            Some(paths) => self.searcher().search_with_views(&req.query, self.explicit_views(paths)?, m)?,
            None => self.searcher().search(&req.query, self.recognizer.as_ref(), k, m)?,
        };
        Ok(result)
    }

    pub fn search(&self, req: &SearchRequest) -> Result<SearchResponse, ApiError> {
        let result = self.run(req)?;
        Ok(self.respond(&result))
    }

    pub fn respond(&self, result: &SearchResult) -> SearchResponse {
        let results = result
            .ranked
            .iter()
            .map(|d| {
                let best_view = d.best_view.as_ref().map(|v| v.path.to_string());
                let snippet = d
                    .best_view
                    .as_ref()
                    .and_then(|v| self.registers.get(&d.paper_id)?.content(&v.path))
                    .map(|text| text.chars().take(SNIPPET_CHARS).collect())
                    .unwrap_or_default();
                Hit {
                    paper_id: d.paper_id.clone(),
                    title: self.titles.get(&d.paper_id).cloned().unwrap_or_default(),
                    score: d.score,
                    best_view,
                    snippet,
                }
            })
            .collect();
        SearchResponse {
            views_used: result.views_used.views.iter().map(|v| v.path.to_string()).collect(),
            results,
        }
    }

    pub fn identify(&self, req: &IdentifyRequest) -> Result<IdentifyResponse, ApiError> {
        let k = req.k.unwrap_or(self.k);
        let out = identify(self.recognizer.as_ref(), &req.query, k).map_err(|e| match e {
            registerdex::recognizer::RecognizerError::EmptyQuery | registerdex::recognizer::RecognizerError::ZeroK => {
                ApiError::BadRequest(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        })?;
        Ok(IdentifyResponse {
            views: out.views.iter().map(|v| v.path.to_string()).collect(),
        })
    }
}
