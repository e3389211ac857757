//! Deterministic, rule-based stand-ins for the generative and embedding models.
//!
//! The fixture backend understands the layout produced by the planted corpus
//! generator: every leaf section in the full text starts with a heading line
//! `## <path below the root, joined by " / ">`. Replies are rendered in the
//! same textual shape a remote model would produce, so the same parsing path
//! runs in every mode. Nothing here is meant for quality measurements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChildContent, ModelBackend, ModelError, ModelRequest};
use crate::schema::NodePath;
use crate::tokenize::tokenize;

/// Heading line that introduces a leaf section in fixture full texts.
pub fn section_heading(path: &NodePath) -> String {
    format!("## {}", path.segments()[1..].join(" / "))
}

/// Body of the section introduced by `heading`, up to the next blank line.
fn find_section(full_text: &str, heading: &str) -> String {
    let mut lines = full_text.lines();
    for line in lines.by_ref() {
        if line.trim_end() == heading {
            break;
        }
    }
    lines
        .take_while(|l| !l.trim().is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .trim()
        .to_string()
}

fn first_sentence(text: &str) -> &str {
    match text.find('.') {
        Some(end) => &text[..end],
        None => text,
    }
}

/// Keeps the leading sentence of each child and drops repeated words.
fn condense(children: &[ChildContent]) -> String {
    let mut seen = std::collections::HashSet::new();
    let words: Vec<&str> = children
        .iter()
        .flat_map(|c| first_sentence(&c.content).split_whitespace())
        .filter(|w| seen.insert(w.to_lowercase()))
        .collect();
    if words.is_empty() {
        String::new()
    } else {
        format!("{}.", words.join(" "))
    }
}

fn classify_by_markers(abstract_text: &str) -> &'static str {
    let lower = abstract_text.to_lowercase();
    if lower.contains("we introduce a benchmark") {
        "Benchmark Construction"
    } else if lower.contains("we survey") {
        "Survey and Review"
    } else if lower.contains("we prove") {
        "Theory Proof"
    } else if lower.contains("we investigate") {
        "Mechanism Exploration"
    } else {
        "Algorithm Innovation"
    }
}

/// Seeded random projection of token hashes.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        HashEmbedder { dimension, seed }
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        for v in out.iter_mut() {
            *v += rng.random_range(-1.0..1.0);
        }
    }

    pub fn embed(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dimension];
        for token in tokenize(text) {
            self.token_vector(&token, &mut acc);
        }
        acc.into_iter().map(|v| v as f32).collect()
    }
}

pub struct FixtureBackend {
    embedder: HashEmbedder,
}

impl FixtureBackend {
    pub fn new(embedding_dim: usize, seed: u64) -> Self {
        FixtureBackend {
            embedder: HashEmbedder::new(embedding_dim, seed),
        }
    }
}

impl ModelBackend for FixtureBackend {
    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, ModelError> {
        let reply = match *request {
            ModelRequest::Classify { abstract_text } => classify_by_markers(abstract_text).to_string(),
            ModelRequest::Extract { doc, node, path } => {
                let value = find_section(&doc.full_text, &section_heading(path));
                let body = json!({
                    "node_path": path.to_string(),
                    "node_name": node.name,
                    "node_desc": node.description,
                    "node_value": value,
                });
                format!("```json\n{}\n```", serde_json::to_string_pretty(&body).expect("json"))
            }
            ModelRequest::Aggregate { parent, children, .. } => {
                let body = json!({
                    "root_name": parent.name,
                    "root_value": condense(children),
                });
                format!("```json\n{}\n```", serde_json::to_string_pretty(&body).expect("json"))
            }
        };
        Ok(reply)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ModelError> {
        Ok(self.embedder.embed(text))
    }
}
