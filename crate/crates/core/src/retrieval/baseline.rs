//! Non-hierarchical comparison systems: direct matching on title, abstract or
//! full text, and split matching over fixed-size chunks or paragraphs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{rank_docs, ScoredDoc, SearchError, SearchResult, StageTimings};
use crate::index::{DenseIndex, IndexError, IndexKind, IndexOptions, LexicalIndex, ViewBody};
use crate::model::{ContentModel, PaperDoc};
use crate::recognizer::RecognizerOutput;
use crate::tokenize::Tokenizer;

pub const CHUNK_TOKENS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Title,
    Abstract,
    FullText,
    Chunk512,
    Paragraph,
}

impl BaselineMode {
    pub const ALL: [BaselineMode; 5] = [
        BaselineMode::Title,
        BaselineMode::Abstract,
        BaselineMode::FullText,
        BaselineMode::Chunk512,
        BaselineMode::Paragraph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMode::Title => "title",
            BaselineMode::Abstract => "abstract",
            BaselineMode::FullText => "full_text",
            BaselineMode::Chunk512 => "chunk512",
            BaselineMode::Paragraph => "paragraph",
        }
    }

    pub fn is_split(self) -> bool {
        matches!(self, BaselineMode::Chunk512 | BaselineMode::Paragraph)
    }
}

impl std::str::FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown baseline mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartFusion {
    Avg,
    Max,
}

impl PartFusion {
    pub fn as_str(self) -> &'static str {
        match self {
            PartFusion::Avg => "avg",
            PartFusion::Max => "max",
        }
    }
}

impl std::str::FromStr for PartFusion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "avg" => Ok(PartFusion::Avg),
            "max" => Ok(PartFusion::Max),
            _ => Err(format!("unknown fusion {s:?} (expected avg or max)")),
        }
    }
}

/// Contiguous windows of `size` tokens, each re-joined with single spaces.
pub fn chunk_tokens(text: &str, tokenizer: &Tokenizer, size: usize) -> Vec<String> {
    tokenizer
        .tokenize(text)
        .chunks(size.max(1))
        .map(|c| c.join(" "))
        .collect()
}

pub fn split_paragraphs(text: &str) -> Vec<String> {
    text.split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

/// One index over the parts of every paper, remembering which paper owns each part.
pub struct BaselineIndex {
    pub mode: BaselineMode,
    pub kind: IndexKind,
    body: ViewBody,
    owner: Vec<usize>,
    paper_ids: Vec<String>,
    tokenizer: Tokenizer,
    /// Papers left out because the text this mode needs is empty.
    pub excluded: Vec<String>,
}

impl BaselineIndex {
    pub fn build(
        corpus: &[PaperDoc],
        mode: BaselineMode,
        kind: IndexKind,
        model: Option<&ContentModel>,
        options: IndexOptions,
    ) -> Result<Self, IndexError> {
        let mut parts: Vec<(String, String)> = Vec::new();
        let mut owner = Vec::new();
        let mut paper_ids = Vec::new();
        let mut excluded = Vec::new();
        for doc in corpus {
            let texts: Vec<String> = match mode {
                BaselineMode::Title => vec![doc.title.clone()],
                BaselineMode::Abstract => vec![doc.abstract_text.clone()],
                BaselineMode::FullText => vec![doc.full_text.clone()],
                BaselineMode::Chunk512 => chunk_tokens(&doc.full_text, &options.tokenizer, CHUNK_TOKENS),
                BaselineMode::Paragraph => split_paragraphs(&doc.full_text),
            };
            let texts: Vec<String> = texts.into_iter().filter(|t| !t.trim().is_empty()).collect();
            if texts.is_empty() {
                tracing::warn!(paper_id = %doc.id, mode = mode.as_str(), "no text for baseline, paper excluded");
                excluded.push(doc.id.clone());
                continue;
            }
            let paper = paper_ids.len();
            paper_ids.push(doc.id.clone());
            for (i, t) in texts.into_iter().enumerate() {
                parts.push((format!("{}#{i}", doc.id), t));
                owner.push(paper);
            }
        }
        let body = match kind {
            IndexKind::Lexical => ViewBody::Lexical(LexicalIndex::build(
                parts.iter().map(|(id, t)| (id.as_str(), t.as_str())),
                options.tokenizer,
                options.bm25,
            )),
            IndexKind::Dense => {
                let model = model.ok_or(IndexError::MissingModel)?;
                let mut ix = DenseIndex::new(model.config().embedding_dim);
                for (id, t) in &parts {
                    let v = model.embed(t).map_err(|source| IndexError::Embedding {
                        paper_id: id.clone(),
                        path: mode.as_str().to_string(),
                        source,
                    })?;
                    ix.push(id, v)?;
                }
                ViewBody::Dense(ix)
            }
        };
        Ok(BaselineIndex {
            mode,
            kind,
            body,
            owner,
            paper_ids,
            tokenizer: options.tokenizer,
            excluded,
        })
    }

    pub fn part_count(&self) -> usize {
        self.owner.len()
    }

    /// Per-paper scores, combining part scores with `fusion`.
    pub fn paper_scores(
        &self,
        query: &str,
        fusion: PartFusion,
        model: Option<&ContentModel>,
    ) -> Result<BTreeMap<String, f64>, IndexError> {
        let part_scores: Vec<f64> = match &self.body {
            ViewBody::Lexical(ix) => ix.score_tokens(&self.tokenizer.tokenize(query)),
            ViewBody::Dense(ix) => {
                let model = model.ok_or(IndexError::MissingModel)?;
                let q = model.embed(query).map_err(|source| IndexError::Embedding {
                    paper_id: "<query>".into(),
                    path: String::new(),
                    source,
                })?;
                let by_id = ix.scores(&q)?;
                ix.doc_ids().iter().map(|id| by_id[id]).collect()
            }
        };
        let mut acc: Vec<(f64, f64, usize)> = vec![(0.0, f64::NEG_INFINITY, 0); self.paper_ids.len()];
        for (part, s) in part_scores.into_iter().enumerate() {
            let slot = &mut acc[self.owner[part]];
            slot.0 += s;
            slot.1 = slot.1.max(s);
            slot.2 += 1;
        }
        Ok(self
            .paper_ids
            .iter()
            .zip(acc)
            .map(|(id, (sum, max, n))| {
                let s = match fusion {
                    PartFusion::Avg => sum / n as f64,
                    PartFusion::Max => max,
                };
                (id.clone(), s)
            })
            .collect())
    }

    pub fn search(
        &self,
        query: &str,
        fusion: PartFusion,
        m: usize,
        model: Option<&ContentModel>,
    ) -> Result<SearchResult, SearchError> {
        if m == 0 {
            return Err(SearchError::Bound("M"));
        }
        let started = std::time::Instant::now();
        let docs = self
            .paper_scores(query, fusion, model)?
            .into_iter()
            .map(|(paper_id, score)| ScoredDoc {
                paper_id,
                score,
                best_view: None,
                per_view_scores: BTreeMap::new(),
            })
            .collect();
        Ok(SearchResult {
            query: query.to_string(),
            views_used: RecognizerOutput::default(),
            ranked: rank_docs(docs, m),
            timings: StageTimings {
                fuse_ms: started.elapsed().as_secs_f64() * 1e3,
                ..Default::default()
            },
            warnings: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FixtureBackend, ModelConfig};
    use std::sync::Arc;

    #[test]
    fn chunk_boundaries() {
        let text: Vec<String> = (0..1030).map(|i| format!("w{i}")).collect();
        let chunks = chunk_tokens(&text.join(" "), &Tokenizer::default(), CHUNK_TOKENS);
        let sizes: Vec<usize> = chunks.iter().map(|c| crate::tokenize::tokenize(c).len()).collect();
        assert_eq!(sizes, [512, 512, 6]);
    }

    fn doc(id: &str, full_text: &str) -> PaperDoc {
        PaperDoc::new(id, &format!("title {id}"), "an abstract", full_text)
    }

    #[test]
    fn single_part_avg_equals_max() {
        let corpus = vec![doc("a", "graph kernels"), doc("b", "speech")];
        let ix = BaselineIndex::build(&corpus, BaselineMode::Paragraph, IndexKind::Lexical, None, Default::default()).unwrap();
        let avg = ix.paper_scores("graph", PartFusion::Avg, None).unwrap();
        let max = ix.paper_scores("graph", PartFusion::Max, None).unwrap();
        assert_eq!(avg, max);
    }

    #[test]
    fn zero_and_s_parts() {
        let corpus = vec![doc("a", "nothing here\n\ngraph kernels"), doc("b", "speech\n\naudio")];
        let ix = BaselineIndex::build(&corpus, BaselineMode::Paragraph, IndexKind::Lexical, None, Default::default()).unwrap();
        let max = ix.paper_scores("graph", PartFusion::Max, None).unwrap();
        let avg = ix.paper_scores("graph", PartFusion::Avg, None).unwrap();
        assert!(max["a"] > 0.0);
        assert!((avg["a"] - max["a"] / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_full_text_is_excluded_from_split_modes() {
        let corpus = vec![doc("a", ""), doc("b", "speech")];
        for mode in [BaselineMode::Chunk512, BaselineMode::Paragraph, BaselineMode::FullText] {
            let ix = BaselineIndex::build(&corpus, mode, IndexKind::Lexical, None, Default::default()).unwrap();
            assert_eq!(ix.excluded, ["a"]);
            let r = ix.search("speech", PartFusion::Max, 10, None).unwrap();
            assert_eq!(r.ids(), ["b"]);
        }
        let ix = BaselineIndex::build(&corpus, BaselineMode::Title, IndexKind::Lexical, None, Default::default()).unwrap();
        assert!(ix.excluded.is_empty());
    }

    #[test]
    fn dense_baseline() {
        let model = ContentModel::new(Arc::new(FixtureBackend::new(32, 1)), ModelConfig { embedding_dim: 32, ..Default::default() });
        let corpus = vec![doc("a", "graph kernels"), doc("b", "speech audio")];
        let ix = BaselineIndex::build(&corpus, BaselineMode::FullText, IndexKind::Dense, Some(&model), Default::default()).unwrap();
        let r = ix.search("graph kernels", PartFusion::Max, 2, Some(&model)).unwrap();
        assert_eq!(r.ids()[0], "a");
        assert!((r.ranked[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in BaselineMode::ALL {
            assert_eq!(m.as_str().parse::<BaselineMode>().unwrap(), m);
        }
    }
}
