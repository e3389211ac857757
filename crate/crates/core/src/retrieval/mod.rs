//! Online search: identify views, look up their indexes, max-fuse per paper, rank.

mod baseline;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baseline::{chunk_tokens, split_paragraphs, BaselineIndex, BaselineMode, PartFusion, CHUNK_TOKENS};

use crate::index::{IndexError, IndexTree, PreparedQuery, ViewIndex};
use crate::model::ContentModel;
use crate::recognizer::{identify, Recognizer, RecognizerError, RecognizerOutput, View};
use crate::schema::NodePath;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Recognizer(#[from] RecognizerError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{0} must be at least 1")]
    Bound(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub paper_id: String,
    pub score: f64,
    /// View that attains the fused score; `None` for baseline rankings.
    pub best_view: Option<View>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_view_scores: BTreeMap<NodePath, f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub identify_ms: f64,
    pub lookup_ms: f64,
    pub fuse_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query: String,
    pub views_used: RecognizerOutput,
    pub ranked: Vec<ScoredDoc>,
    #[serde(skip)]
    pub timings: StageTimings,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub paper_id: String,
    pub score: f64,
    pub best_view: Option<String>,
}

/// Flat result record: `{"query", "views", "results": [{paper_id, score, best_view}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub query: String,
    pub views: Vec<String>,
    pub results: Vec<ResultRow>,
}

impl SearchResult {
    pub fn ids(&self) -> Vec<&str> {
        self.ranked.iter().map(|d| d.paper_id.as_str()).collect()
    }

    pub fn record(&self) -> ResultRecord {
        ResultRecord {
            query: self.query.clone(),
            views: self.views_used.views.iter().map(|v| v.path.to_string()).collect(),
            results: self
                .ranked
                .iter()
                .map(|d| ResultRow {
                    paper_id: d.paper_id.clone(),
                    score: d.score,
                    best_view: d.best_view.as_ref().map(|v| v.path.to_string()),
                })
                .collect(),
        }
    }
}

/// Indexes for `views` in the given order, without repeats. Views absent
/// from the tree are skipped and reported.
pub fn lookup<'t>(tree: &'t IndexTree, views: &[View]) -> (Vec<(View, &'t ViewIndex)>, Vec<String>) {
    let mut seen = BTreeSet::new();
    let mut found = Vec::new();
    let mut warnings = Vec::new();
    for view in views {
        if !seen.insert(view.path.clone()) {
            continue;
        }
        match tree.view(&view.path) {
            Some(ix) => found.push((view.clone(), ix)),
            None => warnings.push(format!("view {} has no index (no paper has content there)", view.path)),
        }
    }
    (found, warnings)
}

fn min_max(scores: &mut BTreeMap<String, f64>) {
    let (lo, hi) = scores
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let range = hi - lo;
    for s in scores.values_mut() {
        *s = if range > 0.0 { (*s - lo) / range } else { 0.0 };
    }
}

/// Per paper, the maximum score over the given indexes. The first view (in
/// input order) attaining the maximum is the best view.
pub fn fuse_scores(
    query: &PreparedQuery,
    indexes: &[(View, &ViewIndex)],
    normalize: bool,
) -> Result<BTreeMap<String, ScoredDoc>, IndexError> {
    let per_view: Vec<BTreeMap<String, f64>> = indexes
        .par_iter()
        .map(|(_, ix)| {
            let mut s = ix.scores(query)?;
            if normalize {
                min_max(&mut s);
            }
            Ok(s)
        })
        .collect::<Result<_, IndexError>>()?;

    let mut fused: BTreeMap<String, ScoredDoc> = BTreeMap::new();
    for ((view, _), scores) in indexes.iter().zip(per_view) {
        for (id, s) in scores {
            let doc = fused.entry(id.clone()).or_insert_with(|| ScoredDoc {
                paper_id: id,
                score: f64::NEG_INFINITY,
                best_view: None,
                per_view_scores: BTreeMap::new(),
            });
            doc.per_view_scores.insert(view.path.clone(), s);
            if s > doc.score {
                doc.score = s;
                doc.best_view = Some(view.clone());
            }
        }
    }
    Ok(fused)
}

/// Descending score, then ascending paper id.
pub fn rank_docs(mut docs: Vec<ScoredDoc>, m: usize) -> Vec<ScoredDoc> {
    docs.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.paper_id.cmp(&b.paper_id)));
    docs.truncate(m);
    docs
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Search over one loaded tree.
pub struct Searcher<'a> {
    pub tree: &'a IndexTree,
    /// Needed to embed queries for dense trees.
    pub model: Option<&'a ContentModel>,
    /// Per-view min-max normalization before fusion.
    pub normalize: bool,
    /// Only views at these depths are looked up.
    pub allowed_depths: Option<BTreeSet<usize>>,
}

impl<'a> Searcher<'a> {
    pub fn new(tree: &'a IndexTree) -> Self {
        Searcher {
            tree,
            model: None,
            normalize: false,
            allowed_depths: None,
        }
    }

    pub fn with_model(mut self, model: &'a ContentModel) -> Self {
        self.model = Some(model);
        self
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }

    pub fn search(&self, query: &str, recognizer: &dyn Recognizer, k: usize, m: usize) -> Result<SearchResult, SearchError> {
        if k == 0 {
            return Err(SearchError::Bound("K"));
        }
        let started = Instant::now();
        let views = identify(recognizer, query, k)?;
        let identify_ms = ms(started);
        let mut result = self.search_with_views(query, views, m)?;
        result.timings.identify_ms = identify_ms;
        tracing::info!(
            recognizer = recognizer.name(),
            identify_ms,
            lookup_ms = result.timings.lookup_ms,
            fuse_ms = result.timings.fuse_ms,
            hits = result.ranked.len(),
            "search"
        );
        Ok(result)
    }

    /// Search with an explicit view set, bypassing any recognizer.
    pub fn search_with_views(&self, query: &str, views: RecognizerOutput, m: usize) -> Result<SearchResult, SearchError> {
        if m == 0 {
            return Err(SearchError::Bound("M"));
        }
        let started = Instant::now();
        let allowed: Vec<View> = views
            .views
            .iter()
            .filter(|v| self.allowed_depths.as_ref().is_none_or(|d| d.contains(&v.path.len())))
            .cloned()
            .collect();
        let (indexes, warnings) = lookup(self.tree, &allowed);
        for w in &warnings {
            tracing::debug!("{w}");
        }
        let lookup_ms = ms(started);

        let started = Instant::now();
        let ranked = if indexes.is_empty() {
            Vec::new()
        } else {
            let prepared = self.tree.prepare_query(query, self.model)?;
            let fused = fuse_scores(&prepared, &indexes, self.normalize)?;
            rank_docs(fused.into_values().collect(), m)
        };
        Ok(SearchResult {
            query: query.to_string(),
            views_used: views,
            ranked,
            timings: StageTimings {
                identify_ms: 0.0,
                lookup_ms,
                fuse_ms: ms(started),
            },
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_index_tree, IndexKind, IndexOptions};
    use crate::recognizer::{LexicalRecognizer, ViewCatalog};
    use crate::register::HierarchicalRegister;
    use crate::schema::{PaperType, SchemaSet};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const WORDS: [&str; 12] = [
        "graph", "kernel", "adam", "dropout", "token", "prune", "sparse", "vision", "speech", "proof", "bound",
        "sample",
    ];

    /// Registers of the algorithm-innovation type with random words at random nodes.
    fn random_registers(n: usize, seed: u64) -> (SchemaSet, Vec<HierarchicalRegister>) {
        let schemas = SchemaSet::bundled();
        let schema = schemas.get(PaperType::AlgorithmInnovation);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regs = (0..n)
            .map(|i| HierarchicalRegister {
                paper_id: format!("p{i:02}"),
                paper_type: PaperType::AlgorithmInnovation,
                schema_version: schema.version.clone(),
                contents: schema
                    .all_paths()
                    .into_iter()
                    .map(|p| {
                        let len = rng.random_range(0..5);
                        let text: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
                        (p, text.join(" "))
                    })
                    .collect(),
            })
            .collect();
        (schemas, regs)
    }

    fn view(path: &str) -> View {
        View::new(NodePath::parse(path).unwrap(), PaperType::AlgorithmInnovation)
    }

    fn output(paths: &[&str]) -> RecognizerOutput {
        RecognizerOutput {
            views: paths.iter().map(|p| view(p)).collect(),
            scores: None,
        }
    }

    #[test]
    fn fusion_takes_max_and_first_best_view() {
        let (schemas, mut regs) = random_registers(2, 1);
        let a = NodePath::parse("Abstract/Method").unwrap();
        let b = NodePath::parse("Abstract/Experiment").unwrap();
        regs[0].contents.insert(a.clone(), "graph".into());
        regs[0].contents.insert(b.clone(), "graph graph".into());
        regs[1].contents.insert(a.clone(), "kernel".into());
        regs[1].contents.insert(b.clone(), String::new());
        let tree = build_index_tree(&regs, &schemas, IndexKind::Lexical, None, IndexOptions::default()).unwrap();
        let (ixs, warnings) = lookup(&tree, &[view("Abstract/Method"), view("Abstract/Experiment"), view("Abstract/Method")]);
        assert!(warnings.is_empty());
        assert_eq!(ixs.len(), 2);
        let q = tree.prepare_query("graph", None).unwrap();
        let fused = fuse_scores(&q, &ixs, false).unwrap();
        let p0 = &fused["p00"];
        let (sa, sb) = (p0.per_view_scores[&a], p0.per_view_scores[&b]);
        assert_eq!(p0.score, sa.max(sb));
        let expected_best = if sb > sa { &b } else { &a };
        assert_eq!(&p0.best_view.as_ref().unwrap().path, expected_best);
        // p01 is blank at Experiment, so only Method contributes
        assert_eq!(fused["p01"].per_view_scores.len(), 1);
    }

    #[test]
    fn missing_view_is_skipped_with_warning() {
        let (schemas, mut regs) = random_registers(3, 2);
        for r in &mut regs {
            r.contents.insert(NodePath::parse("Abstract/Conclusion/Future Work").unwrap(), String::new());
        }
        let tree = build_index_tree(&regs, &schemas, IndexKind::Lexical, None, IndexOptions::default()).unwrap();
        let (ixs, warnings) = lookup(&tree, &[view("Abstract/Conclusion/Future Work"), view("Abstract")]);
        assert_eq!(ixs.len(), 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn brute_force_matrix_oracle() {
        let (schemas, regs) = random_registers(10, 3);
        let tree = build_index_tree(&regs, &schemas, IndexKind::Lexical, None, IndexOptions::default()).unwrap();
        let views = ["Abstract/Method/Framework", "Abstract/Experiment", "Abstract"];
        for query in ["graph adam", "sparse sparse proof", "token"] {
            let vs: Vec<View> = views.iter().map(|p| view(p)).collect();
            let (ixs, _) = lookup(&tree, &vs);
            let fused = fuse_scores(&tree.prepare_query(query, None).unwrap(), &ixs, false).unwrap();
            // full matrix: paper × view, None where blank
            let mut expected: BTreeMap<String, f64> = BTreeMap::new();
            for (_, ix) in &ixs {
                for (id, s) in ix.lexical_scores(query).unwrap() {
                    let e = expected.entry(id).or_insert(f64::NEG_INFINITY);
                    *e = e.max(s);
                }
            }
            let got: BTreeMap<String, f64> = fused.iter().map(|(k, d)| (k.clone(), d.score)).collect();
            assert_eq!(got, expected, "{query}");
        }
    }

    #[test]
    fn explainability_and_subset_consistency() {
        let (schemas, regs) = random_registers(15, 4);
        let tree = build_index_tree(&regs, &schemas, IndexKind::Lexical, None, IndexOptions::default()).unwrap();
        let rec = LexicalRecognizer::new(ViewCatalog::new(&schemas));
        let searcher = Searcher::new(&tree);
        for query in ["graph kernel", "dropout", "vision speech sample"] {
            let full = searcher.search(query, &rec, 5, 15).unwrap();
            for doc in &full.ranked {
                let view = doc.best_view.as_ref().unwrap();
                let single = tree.view(&view.path).unwrap().lexical_scores(query).unwrap();
                assert_eq!(single[&doc.paper_id], doc.score);
            }
            let top3 = searcher.search(query, &rec, 5, 3).unwrap();
            assert_eq!(top3.ranked[..], full.ranked[..3]);
            assert!(full.ranked.windows(2).all(|w| w[0].score > w[1].score
                || (w[0].score == w[1].score && w[0].paper_id < w[1].paper_id)));
        }
    }

    #[test]
    fn bounds_and_large_m() {
        let (schemas, regs) = random_registers(4, 5);
        let tree = build_index_tree(&regs, &schemas, IndexKind::Lexical, None, IndexOptions::default()).unwrap();
        let s = Searcher::new(&tree);
        let rec = LexicalRecognizer::new(ViewCatalog::new(&schemas));
        assert!(matches!(s.search("graph", &rec, 0, 5), Err(SearchError::Bound("K"))));
        assert!(matches!(s.search("graph", &rec, 5, 0), Err(SearchError::Bound("M"))));
        let r = s.search_with_views("graph", output(&["Abstract"]), 100).unwrap();
        assert_eq!(r.ranked.len(), tree.view(&NodePath::parse("Abstract").unwrap()).unwrap().doc_count());
    }

    #[test]
    fn normalization_maps_into_unit_interval() {
        let (schemas, regs) = random_registers(8, 6);
        let tree = build_index_tree(&regs, &schemas, IndexKind::Lexical, None, IndexOptions::default()).unwrap();
        let s = Searcher::new(&tree).normalized(true);
        let r = s.search_with_views("graph adam", output(&["Abstract", "Abstract/Method"]), 8).unwrap();
        assert!(r.ranked.iter().all(|d| (0.0..=1.0).contains(&d.score)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn superset_of_views_never_lowers_scores(seed in 0u64..1000, mask in 1u32..(1 << 6), extra in 1u32..(1 << 6)) {
            let (schemas, regs) = random_registers(8, seed);
            let tree = build_index_tree(&regs, &schemas, IndexKind::Lexical, None, IndexOptions::default()).unwrap();
            let all: Vec<View> = tree.views.keys().take(6).map(|p| View::new(p.clone(), PaperType::AlgorithmInnovation)).collect();
            let pick = |m: u32| -> Vec<View> { all.iter().enumerate().filter(|(i, _)| m & (1 << i) != 0).map(|(_, v)| v.clone()).collect() };
            let small = pick(mask);
            let big = pick(mask | extra);
            let q = tree.prepare_query(WORDS[(seed % 12) as usize], None).unwrap();
            let fs = fuse_scores(&q, &lookup(&tree, &small).0, false).unwrap();
            let fb = fuse_scores(&q, &lookup(&tree, &big).0, false).unwrap();
            for (id, d) in fs {
                prop_assert!(fb[&id].score >= d.score);
            }
        }
    }
}
