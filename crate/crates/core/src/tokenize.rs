//! Lexical analysis shared by the BM25 indexes, the lexical view recognizer
//! and the chunking baselines.

use serde::{Deserialize, Serialize};

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "in", "is", "it", "its",
    "of", "on", "or", "that", "the", "this", "to", "was", "were", "which", "with",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tokenizer {
    #[serde(default)]
    pub remove_stopwords: bool,
}

impl Tokenizer {
    pub fn new(remove_stopwords: bool) -> Self {
        Tokenizer { remove_stopwords }
    }

    /// Unicode lowercase, split on anything that is not alphanumeric.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| !self.remove_stopwords || !STOPWORDS.contains(&t.as_str()))
            .collect()
    }
}

/// Tokenizes with the default configuration.
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}
