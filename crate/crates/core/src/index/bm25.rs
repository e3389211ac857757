//! Okapi BM25 over an in-memory inverted index.
//!
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//!
//! Repeated query terms contribute once per occurrence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalIndex {
    pub(crate) doc_ids: Vec<String>,
    pub(crate) doc_lens: Vec<u32>,
    pub(crate) postings: BTreeMap<String, Vec<Posting>>,
    pub(crate) params: Bm25Params,
    pub(crate) tokenizer: Tokenizer,
}

impl LexicalIndex {
    pub fn build<'a, I>(docs: I, tokenizer: Tokenizer, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut index = LexicalIndex {
            doc_ids: Vec::new(),
            doc_lens: Vec::new(),
            postings: BTreeMap::new(),
            params,
            tokenizer,
        };
        for (id, text) in docs {
            index.add(id, text);
        }
        index
    }

    fn add(&mut self, id: &str, text: &str) {
        let doc = self.doc_ids.len() as u32;
        let tokens = self.tokenizer.tokenize(text);
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for token in &tokens {
            *counts.entry(token.clone()).or_default() += 1;
        }
        for (term, tf) in counts {
            self.postings.entry(term).or_default().push(Posting { doc, tf });
        }
        self.doc_ids.push(id.to_string());
        self.doc_lens.push(tokens.len() as u32);
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer(&self) -> Tokenizer {
        self.tokenizer
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_lens[doc]
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.doc_lens.is_empty() {
            return 0.0;
        }
        self.doc_lens.iter().map(|&l| f64::from(l)).sum::<f64>() / self.doc_lens.len() as f64
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_freq(&self, term: &str, doc: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|ps| ps.iter().find(|p| p.doc as usize == doc))
            .map_or(0, |p| p.tf)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores indexed by document position.
    pub fn score_tokens(&self, query: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_count()];
        let avgdl = self.avg_doc_len();
        let Bm25Params { k1, b } = self.params;
        for term in query {
            let Some(postings) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in postings {
                let tf = f64::from(p.tf);
                let dl = f64::from(self.doc_lens[p.doc as usize]);
                let len_norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
                scores[p.doc as usize] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm));
            }
        }
        scores
    }

    /// BM25 score for every indexed document; non-matching documents score 0.
    pub fn scores(&self, query: &str) -> BTreeMap<String, f64> {
        let tokens = self.tokenizer.tokenize(query);
        self.doc_ids
            .iter()
            .cloned()
            .zip(self.score_tokens(&tokens))
            .collect()
    }

    /// Position and score of the best document, if any scores above zero.
    pub fn top1(&self, query: &str) -> Option<(usize, f64)> {
        let tokens = self.tokenizer.tokenize(query);
        self.score_tokens(&tokens)
            .into_iter()
            .enumerate()
            .filter(|(_, s)| *s > 0.0)
            .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((i, s)),
            })
    }
}
