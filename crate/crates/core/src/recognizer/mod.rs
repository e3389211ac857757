//! Query → view routing.
//!
//! A recognizer proposes ranked node paths for a query; [`identify`] keeps the
//! ones that exist in the recognizer's catalog, drops repeats and cuts to K.

mod catalog;
mod golden;
mod lexical;
mod remote;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use catalog::{CatalogEntry, PrefixTrie, ViewCatalog};
pub use golden::{GoldenMode, GoldenRecognizer};
pub use lexical::LexicalRecognizer;
pub use remote::{RemoteRecognizer, RemoteRecognizerConfig};

use crate::model::TransportError;
use crate::schema::{NodePath, PaperType, SchemaSet};

#[derive(Debug, thiserror::Error)]
pub enum RecognizerError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("K must be at least 1")]
    ZeroK,
    #[error("recognizer service: {0}")]
    Transport(#[from] TransportError),
    #[error("recognizer reply: {0}")]
    Reply(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct View {
    pub path: NodePath,
    pub schema_type: PaperType,
}

impl View {
    pub fn new(path: NodePath, schema_type: PaperType) -> Self {
        View { path, schema_type }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecognizerOutput {
    pub views: Vec<View>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl RecognizerOutput {
    pub fn paths(&self) -> Vec<NodePath> {
        self.views.iter().map(|v| v.path.clone()).collect()
    }

    pub fn top(&self) -> Option<&View> {
        self.views.first()
    }
}

/// A proposed path, possibly invalid, with an optional confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub path: String,
    pub score: Option<f64>,
}

pub trait Recognizer: Send + Sync {
    fn name(&self) -> &str;

    /// Views this recognizer may emit.
    fn catalog(&self) -> &ViewCatalog;

    /// Ranked candidates, best first. May contain invalid or repeated paths.
    fn propose(&self, query: &str, k: usize) -> Result<Vec<Candidate>, RecognizerError>;
}

/// Top-K distinct, catalog-valid views for `query`.
pub fn identify(recognizer: &dyn Recognizer, query: &str, k: usize) -> Result<RecognizerOutput, RecognizerError> {
    if query.trim().is_empty() {
        return Err(RecognizerError::EmptyQuery);
    }
    if k == 0 {
        return Err(RecognizerError::ZeroK);
    }
    let catalog = recognizer.catalog();
    let mut views: Vec<View> = Vec::new();
    let mut scores = Vec::new();
    let mut all_scored = true;
    for cand in recognizer.propose(query, k)? {
        let Some(path) = NodePath::parse(cand.path.trim()) else {
            continue;
        };
        let Some(view) = catalog.view(&path) else {
            tracing::debug!(recognizer = recognizer.name(), path = %cand.path, "dropping invalid view");
            continue;
        };
        if views.iter().any(|v| v.path == path) {
            continue;
        }
        views.push(view.clone());
        all_scored &= cand.score.is_some();
        scores.push(cand.score.unwrap_or(f64::NAN));
        if views.len() == k {
            break;
        }
    }
    let scores = (all_scored && !scores.is_empty()).then_some(scores);
    Ok(RecognizerOutput { views, scores })
}

/// r = overlap/|predicted| + overlap/|golden|, overlap = common prefix length in nodes.
pub fn hierarchical_reward(golden: &NodePath, predicted: &NodePath) -> f64 {
    if golden.is_empty() || predicted.is_empty() {
        return 0.0;
    }
    let overlap = golden.common_prefix_len(predicted) as f64;
    overlap / predicted.len() as f64 + overlap / golden.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizerExample {
    pub query: String,
    pub golden_view: NodePath,
    pub schema_type: PaperType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_id: Option<String>,
}

impl RecognizerExample {
    pub fn golden(&self) -> View {
        View::new(self.golden_view.clone(), self.schema_type)
    }
}

/// Reads one example per line, rejecting golden views invalid for their schema.
pub fn load_examples(path: &Path, schemas: &SchemaSet) -> Result<Vec<RecognizerExample>, RecognizerError> {
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| RecognizerError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let parse_err = |message: String| RecognizerError::Parse {
            path: shown.clone(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: RecognizerExample = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if !schemas.get(ex.schema_type).validate_path(&ex.golden_view) {
            return Err(parse_err(format!(
                "golden view {} is not valid for {}",
                ex.golden_view, ex.schema_type
            )));
        }
        out.push(ex);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecognizerReport {
    pub examples: usize,
    pub top1_accuracy: f64,
    pub mean_reward: f64,
    /// golden path → predicted top-1 path (or `"<none>"`) → count
    pub per_view_confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Accuracy compares paths; a shared path counts as correct whatever schema it was attributed to.
pub fn evaluate_recognizer(
    examples: &[RecognizerExample],
    recognizer: &dyn Recognizer,
    k: usize,
) -> Result<RecognizerReport, RecognizerError> {
    let mut hits = 0usize;
    let mut reward_sum = 0.0;
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for ex in examples {
        let out = identify(recognizer, &ex.query, k)?;
        let predicted = out.top().map(|v| v.path.clone());
        let label = predicted.as_ref().map_or_else(|| "<none>".to_string(), NodePath::to_string);
        if let Some(p) = &predicted {
            if *p == ex.golden_view {
                hits += 1;
            }
            reward_sum += hierarchical_reward(&ex.golden_view, p);
        }
        *confusion
            .entry(ex.golden_view.to_string())
            .or_default()
            .entry(label)
            .or_default() += 1;
    }
    let n = examples.len().max(1) as f64;
    Ok(RecognizerReport {
        examples: examples.len(),
        top1_accuracy: hits as f64 / n,
        mean_reward: reward_sum / n,
        per_view_confusion: confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> NodePath {
        NodePath::parse(s).unwrap()
    }

    #[test]
    fn reward_examples() {
        let op = p("Abstract/Method/Implementation/Operation");
        assert_eq!(hierarchical_reward(&op, &op), 2.0);
        let module = p("Abstract/Method/Implementation/Module");
        assert!((hierarchical_reward(&op, &module) - 1.5).abs() < 1e-12);
        let dataset = p("Abstract/Experiment/Dataset");
        assert!((hierarchical_reward(&op, &dataset) - 7.0 / 12.0).abs() < 1e-12);
        assert_eq!(hierarchical_reward(&op, &p("Root")), 0.0);
    }

    fn arb_path() -> impl Strategy<Value = NodePath> {
        prop::collection::vec(prop::sample::select(vec!["A", "B", "C"]), 1..6).prop_map(NodePath::new)
    }

    proptest! {
        #[test]
        fn reward_bounds_and_identity(g in arb_path(), q in arb_path()) {
            let r = hierarchical_reward(&g, &q);
            prop_assert!((0.0..=2.0).contains(&r));
            prop_assert_eq!(r == 2.0, g == q);
            prop_assert_eq!(r, hierarchical_reward(&q, &g));
        }

        #[test]
        fn wrong_extension_lowers_reward(g in arb_path(), cut in 0usize..6, extra in 1usize..3) {
            let keep = 1 + cut % g.len();
            let prefix = NodePath::new(g.segments()[..keep].to_vec());
            let base = hierarchical_reward(&g, &prefix);
            // "Z" never occurs in generated paths
            let mut segs = prefix.segments().to_vec();
            for _ in 0..extra {
                segs.push("Z".into());
            }
            prop_assert!(hierarchical_reward(&g, &NodePath::new(segs)) < base);
        }
    }

    struct Fixed {
        catalog: ViewCatalog,
        paths: Vec<&'static str>,
    }

    impl Recognizer for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn catalog(&self) -> &ViewCatalog {
            &self.catalog
        }
        fn propose(&self, _: &str, _: usize) -> Result<Vec<Candidate>, RecognizerError> {
            Ok(self
                .paths
                .iter()
                .map(|s| Candidate {
                    path: s.to_string(),
                    score: None,
                })
                .collect())
        }
    }

    fn fixed(paths: Vec<&'static str>) -> Fixed {
        Fixed {
            catalog: ViewCatalog::new(&SchemaSet::bundled()),
            paths,
        }
    }

    #[test]
    fn identify_filters_dedupes_and_truncates() {
        let r = fixed(vec!["Abstract/Bogus", "Abstract/Method", "Abstract/Method", "Abstract", "Abstract/Experiment"]);
        let out = identify(&r, "q", 2).unwrap();
        assert_eq!(out.paths(), vec![p("Abstract/Method"), p("Abstract")]);
        assert!(out.scores.is_none());
        assert!(matches!(identify(&r, "  ", 2), Err(RecognizerError::EmptyQuery)));
        assert!(matches!(identify(&r, "q", 0), Err(RecognizerError::ZeroK)));
    }

    #[test]
    fn evaluation_reports() {
        let golden = "Abstract/Method/Implementation/Operation";
        let examples: Vec<RecognizerExample> = (0..4)
            .map(|i| RecognizerExample {
                query: format!("q{i}"),
                golden_view: p(golden),
                schema_type: PaperType::AlgorithmInnovation,
                paper_id: None,
            })
            .collect();
        let perfect = evaluate_recognizer(&examples, &fixed(vec![golden]), 5).unwrap();
        assert_eq!(perfect.top1_accuracy, 1.0);
        assert_eq!(perfect.mean_reward, 2.0);

        let sibling = evaluate_recognizer(&examples, &fixed(vec!["Abstract/Method/Implementation/Module"]), 5).unwrap();
        assert_eq!(sibling.top1_accuracy, 0.0);
        let hand: f64 = [0.75 + 0.75; 4].iter().sum::<f64>() / 4.0;
        assert!((sibling.mean_reward - hand).abs() < 1e-12);
        assert_eq!(sibling.per_view_confusion[golden]["Abstract/Method/Implementation/Module"], 4);

        let empty = evaluate_recognizer(&examples, &fixed(vec!["Nope/Nope"]), 5).unwrap();
        assert_eq!(empty.top1_accuracy, 0.0);
        assert_eq!(empty.mean_reward, 0.0);
        assert_eq!(empty.per_view_confusion[golden]["<none>"], 4);
    }

    #[test]
    fn examples_file_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex.jsonl");
        std::fs::write(
            &path,
            "{\"query\":\"q\",\"golden_view\":\"Abstract/Taxonomy/Category/Comparison\",\"schema_type\":\"survey\"}\n",
        )
        .unwrap();
        let schemas = SchemaSet::bundled();
        assert_eq!(load_examples(&path, &schemas).unwrap().len(), 1);
        std::fs::write(
            &path,
            "\n{\"query\":\"q\",\"golden_view\":\"Abstract/Taxonomy/Category/Comparison\",\"schema_type\":\"theory_proof\"}\n",
        )
        .unwrap();
        let err = load_examples(&path, &schemas).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
