//! Recall@K benchmarks over query sets for the hierarchical engine and the baselines.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::index::{IndexKind, IndexOptions, IndexTree};
use crate::model::{ContentModel, PaperDoc};
use crate::recognizer::{GoldenMode, GoldenRecognizer, LexicalRecognizer, Recognizer, ViewCatalog};
use crate::retrieval::{BaselineIndex, BaselineMode, PartFusion, Searcher};
use crate::schema::{NodePath, PaperType, SchemaSet};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}:{line}: {message}")]
    Data { path: String, line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid system {0:?}")]
    System(String),
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("layers_kept must not be empty")]
    NoLayers,
}

fn ids_from_any<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(u64),
    }
    let raw: Vec<Id> = Vec::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|id| match id {
            Id::S(s) => s,
            Id::N(n) => n.to_string(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub query: String,
    #[serde(alias = "corpusids", deserialize_with = "ids_from_any")]
    pub relevant_ids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity_tag: Option<String>,
    /// View the query was written against, when known (drives the golden recognizers).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_view: Option<NodePath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_type: Option<PaperType>,
}

/// Reads one query per line, checking ids against the corpus and golden views against the schemas.
pub fn load_queries(
    path: &Path,
    corpus_ids: &BTreeSet<String>,
    schemas: &SchemaSet,
) -> Result<Vec<EvalQuery>, EvalError> {
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let data = |message: String| EvalError::Data {
            path: shown.clone(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| data(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: EvalQuery = serde_json::from_str(&line).map_err(|e| data(e.to_string()))?;
        if q.query.trim().is_empty() {
            return Err(data("empty query".into()));
        }
        if q.relevant_ids.is_empty() {
            return Err(data("relevant_ids is empty".into()));
        }
        if let Some(missing) = q.relevant_ids.iter().find(|id| !corpus_ids.contains(*id)) {
            return Err(data(format!("relevant id {missing:?} is not in the corpus")));
        }
        if let (Some(view), Some(t)) = (&q.golden_view, q.schema_type) {
            if !schemas.get(t).validate_path(view) {
                return Err(data(format!("golden view {view} is not valid for {t}")));
            }
        }
        out.push(q);
    }
    Ok(out)
}

/// |top-k ∩ relevant| / |relevant|.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|id| relevant.contains(id.as_ref()))
        .count();
    hits as f64 / relevant.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RecognizerChoice {
    Lexical,
    Oracle,
    Adversarial,
    /// `None` uses the run seed.
    Random(Option<u64>),
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SystemConfig {
    Register(RecognizerChoice),
    Baseline(BaselineMode, PartFusion),
}

impl fmt::Display for SystemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemConfig::Register(r) => match r {
                RecognizerChoice::Lexical => f.write_str("register:lexical"),
                RecognizerChoice::Oracle => f.write_str("register:oracle"),
                RecognizerChoice::Adversarial => f.write_str("register:adversarial"),
                RecognizerChoice::Random(None) => f.write_str("register:random"),
                RecognizerChoice::Random(Some(s)) => write!(f, "register:random:{s}"),
                RecognizerChoice::Remote => f.write_str("register:remote"),
            },
            SystemConfig::Baseline(mode, fusion) if mode.is_split() => {
                write!(f, "baseline:{}:{}", mode.as_str(), fusion.as_str())
            }
            SystemConfig::Baseline(mode, _) => write!(f, "baseline:{}", mode.as_str()),
        }
    }
}

impl std::str::FromStr for SystemConfig {
    type Err = EvalError;

    /// `register:<lexical|oracle|adversarial|random[:seed]|remote>` or
    /// `baseline:<title|abstract|full_text|chunk512|paragraph>[:avg|max]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::System(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["register", rest @ ..] => {
                let choice = match rest {
                    ["lexical"] => RecognizerChoice::Lexical,
                    ["oracle"] => RecognizerChoice::Oracle,
                    ["adversarial"] => RecognizerChoice::Adversarial,
                    ["random"] => RecognizerChoice::Random(None),
                    ["random", seed] => RecognizerChoice::Random(Some(seed.parse().map_err(|_| bad())?)),
                    ["remote"] => RecognizerChoice::Remote,
                    _ => return Err(bad()),
                };
                Ok(SystemConfig::Register(choice))
            }
            ["baseline", mode] => Ok(SystemConfig::Baseline(mode.parse().map_err(|_| bad())?, PartFusion::Max)),
            ["baseline", mode, fusion] => {
                let mode: BaselineMode = mode.parse().map_err(|_| bad())?;
                if !mode.is_split() {
                    return Err(bad());
                }
                Ok(SystemConfig::Baseline(mode, fusion.parse().map_err(|_| bad())?))
            }
            _ => Err(bad()),
        }
    }
}

pub fn parse_systems(list: &str) -> Result<Vec<SystemConfig>, EvalError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// Everything a benchmark run reads.
pub struct BenchEnv<'a> {
    pub dataset: String,
    pub schemas: &'a SchemaSet,
    pub tree: Option<&'a IndexTree>,
    pub corpus: &'a [PaperDoc],
    pub model: Option<&'a ContentModel>,
    pub remote: Option<&'a dyn Recognizer>,
    pub kind: IndexKind,
    pub index_options: IndexOptions,
    pub k: usize,
    pub normalize: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCell {
    pub queries: usize,
    #[serde(rename = "recall@5")]
    pub recall_at_5: f64,
    #[serde(rename = "recall@10")]
    pub recall_at_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    /// `"ok"` or the failure that prevented the run.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall: Option<RecallCell>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_tag: BTreeMap<String, RecallCell>,
}

impl SystemReport {
    pub fn recall5(&self, tag: Option<&str>) -> Option<f64> {
        match tag {
            None => self.overall.as_ref().map(|c| c.recall_at_5),
            Some(t) => self.per_tag.get(t).map(|c| c.recall_at_5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dataset: String,
    pub queries: usize,
    pub kind: IndexKind,
    pub k: usize,
    pub m: usize,
    pub normalize: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers_kept: Option<Vec<usize>>,
    pub systems: Vec<String>,
    pub schema_versions: BTreeMap<PaperType, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_ms: f64,
    pub mean_query_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub fingerprint: String,
    pub config: BenchConfig,
    pub systems: Vec<SystemReport>,
    /// Wall-clock figures; kept out of the canonical JSON so reports stay reproducible.
    #[serde(skip)]
    pub runtime: BTreeMap<String, RuntimeStats>,
}

impl BenchReport {
    pub fn system(&self, name: &str) -> Option<&SystemReport> {
        self.systems.iter().find(|s| s.system == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn runtime_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.runtime).expect("runtime serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "dataset {} | {} queries | kind {} | K={} | seed {} | fingerprint {}\n",
            self.config.dataset, self.config.queries, self.config.kind, self.config.k, self.config.seed, self.fingerprint
        );
        if let Some(layers) = &self.config.layers_kept {
            out.push_str(&format!("layers kept: {layers:?}\n"));
        }
        let width = self.systems.iter().map(|s| s.system.len()).max().unwrap_or(6).max(6);
        out.push_str(&format!("{:<width$}  {:<8}  {:>5}  {:>6}  {:>6}\n", "system", "tag", "n", "R@5", "R@10"));
        for s in &self.systems {
            match &s.overall {
                None => out.push_str(&format!("{:<width$}  FAILED: {}\n", s.system, s.status)),
                Some(all) => {
                    let rows = std::iter::once(("all", all)).chain(s.per_tag.iter().map(|(t, c)| (t.as_str(), c)));
                    for (tag, c) in rows {
                        out.push_str(&format!(
                            "{:<width$}  {:<8}  {:>5}  {:>6.3}  {:>6.3}\n",
                            s.system, tag, c.queries, c.recall_at_5, c.recall_at_10
                        ));
                    }
                }
            }
        }
        out
    }
}

fn cell(rows: &[(f64, f64)]) -> RecallCell {
    let n = rows.len().max(1) as f64;
    RecallCell {
        queries: rows.len(),
        recall_at_5: rows.iter().map(|r| r.0).sum::<f64>() / n,
        recall_at_10: rows.iter().map(|r| r.1).sum::<f64>() / n,
    }
}

const RANK_DEPTH: usize = 10;

type Ranker<'a> = Box<dyn Fn(&EvalQuery) -> Result<Vec<String>, String> + Sync + 'a>;

fn ranker<'a>(
    system: SystemConfig,
    env: &'a BenchEnv<'a>,
    queries: &[EvalQuery],
    layers: Option<&BTreeSet<usize>>,
) -> Result<Ranker<'a>, String> {
    match system {
        SystemConfig::Register(choice) => {
            let tree = env.tree.ok_or("no index tree loaded")?;
            if tree.kind != env.kind {
                return Err(format!("index is {}, run requested {}", tree.kind, env.kind));
            }
            let catalog = match layers {
                Some(d) => ViewCatalog::restricted_to_depths(env.schemas, d),
                None => ViewCatalog::new(env.schemas),
            };
            let golden = || {
                queries
                    .iter()
                    .filter_map(|q| q.golden_view.clone().map(|v| (q.query.clone(), v)))
                    .collect::<Vec<_>>()
            };
            let recognizer: Box<dyn Recognizer + 'a> = match choice {
                RecognizerChoice::Lexical => Box::new(LexicalRecognizer::new(catalog)),
                RecognizerChoice::Oracle => Box::new(GoldenRecognizer::new(catalog, GoldenMode::Oracle, golden())),
                RecognizerChoice::Adversarial => {
                    Box::new(GoldenRecognizer::new(catalog, GoldenMode::Adversarial, golden()))
                }
                RecognizerChoice::Random(seed) => Box::new(GoldenRecognizer::new(
                    catalog,
                    GoldenMode::Random {
                        seed: seed.unwrap_or(env.seed),
                    },
                    golden(),
                )),
                RecognizerChoice::Remote => {
                    let remote = env.remote.ok_or("no remote recognizer configured")?;
                    Box::new(Borrowed(remote))
                }
            };
            let mut searcher = Searcher::new(tree).normalized(env.normalize);
            searcher.model = env.model;
            searcher.allowed_depths = layers.cloned();
            Ok(Box::new(move |q: &EvalQuery| {
                searcher
                    .search(&q.query, recognizer.as_ref(), env.k, RANK_DEPTH)
                    .map(|r| r.ranked.into_iter().map(|d| d.paper_id).collect())
                    .map_err(|e| e.to_string())
            }))
        }
        SystemConfig::Baseline(mode, fusion) => {
            if env.corpus.is_empty() {
                return Err("no corpus loaded".into());
            }
            let index = BaselineIndex::build(env.corpus, mode, env.kind, env.model, env.index_options)
                .map_err(|e| e.to_string())?;
            Ok(Box::new(move |q: &EvalQuery| {
                index
                    .search(&q.query, fusion, RANK_DEPTH, env.model)
                    .map(|r| r.ranked.into_iter().map(|d| d.paper_id).collect())
                    .map_err(|e| e.to_string())
            }))
        }
    }
}

struct Borrowed<'a>(&'a dyn Recognizer);

impl Recognizer for Borrowed<'_> {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn catalog(&self) -> &ViewCatalog {
        self.0.catalog()
    }
    fn propose(&self, query: &str, k: usize) -> Result<Vec<crate::recognizer::Candidate>, crate::recognizer::RecognizerError> {
        self.0.propose(query, k)
    }
}

fn fingerprint(config: &BenchConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
}

fn run(
    queries: &[EvalQuery],
    systems: &[SystemConfig],
    env: &BenchEnv<'_>,
    layers: Option<&BTreeSet<usize>>,
) -> Result<BenchReport, EvalError> {
    if queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let config = BenchConfig {
        dataset: env.dataset.clone(),
        queries: queries.len(),
        kind: env.kind,
        k: env.k,
        m: RANK_DEPTH,
        normalize: env.normalize,
        seed: env.seed,
        layers_kept: layers.map(|l| l.iter().copied().collect()),
        systems: systems.iter().map(ToString::to_string).collect(),
        schema_versions: env.schemas.versions(),
    };
    let mut reports = Vec::new();
    let mut runtime = BTreeMap::new();
    for &system in systems {
        let name = system.to_string();
        let started = Instant::now();
        let outcome = ranker(system, env, queries, layers).and_then(|rank| {
            queries
                .par_iter()
                .map(|q| {
                    let ids = rank(q)?;
                    Ok((recall_at_k(&ids, &q.relevant_ids, 5), recall_at_k(&ids, &q.relevant_ids, 10)))
                })
                .collect::<Result<Vec<(f64, f64)>, String>>()
        });
        let total_ms = started.elapsed().as_secs_f64() * 1e3;
        runtime.insert(
            name.clone(),
            RuntimeStats {
                total_ms,
                mean_query_ms: total_ms / queries.len() as f64,
            },
        );
        let report = match outcome {
            Ok(rows) => {
                let mut by_tag: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
                for (q, r) in queries.iter().zip(&rows) {
                    if let Some(tag) = &q.granularity_tag {
                        by_tag.entry(tag.clone()).or_default().push(*r);
                    }
                }
                SystemReport {
                    system: name,
                    status: "ok".into(),
                    overall: Some(cell(&rows)),
                    per_tag: by_tag.iter().map(|(t, rows)| (t.clone(), cell(rows))).collect(),
                }
            }
            Err(e) => {
                tracing::warn!(system = %name, error = %e, "system failed");
                SystemReport {
                    system: name,
                    status: e,
                    overall: None,
                    per_tag: BTreeMap::new(),
                }
            }
        };
        reports.push(report);
    }
    Ok(BenchReport {
        fingerprint: fingerprint(&config),
        config,
        systems: reports,
        runtime,
    })
}

/// Recall@5 and recall@10 of every system, overall and per granularity tag.
pub fn run_benchmark(queries: &[EvalQuery], systems: &[SystemConfig], env: &BenchEnv<'_>) -> Result<BenchReport, EvalError> {
    run(queries, systems, env, None)
}

/// Like [`run_benchmark`], with both view recognition and lookup limited to
/// views whose depth (in nodes) is in `layers_kept`.
pub fn run_layer_ablation(
    queries: &[EvalQuery],
    systems: &[SystemConfig],
    env: &BenchEnv<'_>,
    layers_kept: &BTreeSet<usize>,
) -> Result<BenchReport, EvalError> {
    if layers_kept.is_empty() {
        return Err(EvalError::NoLayers);
    }
    run(queries, systems, env, Some(layers_kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&["a", "b", "p1"], &set(&["p1"]), 5), 1.0);
        assert_eq!(recall_at_k(&["p1", "x", "y", "z", "w", "p2"], &set(&["p1", "p2"]), 5), 0.5);
        assert_eq!(recall_at_k(&["x", "p1"], &set(&["p1"]), 1), 0.0);
    }

    #[test]
    fn recall_monte_carlo() {
        let corpus: Vec<String> = (0..50).map(|i| format!("p{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let relevant = set(&["p7"]);
        let mut total = 0.0;
        for _ in 0..100 {
            let mut perm = corpus.clone();
            perm.shuffle(&mut rng);
            total += recall_at_k(&perm, &relevant, 10);
        }
        let mean = total / 100.0;
        assert!((mean - 0.2).abs() <= 0.05, "{mean}");
    }

    #[test]
    fn recall_monotone_in_k() {
        let ranked = ["a", "b", "c", "d", "e", "f"];
        let rel = set(&["b", "e", "z"]);
        let mut last = 0.0;
        for k in 1..8 {
            let r = recall_at_k(&ranked, &rel, k);
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn system_names_round_trip() {
        for s in [
            "register:lexical",
            "register:oracle",
            "register:adversarial",
            "register:random",
            "register:random:9",
            "register:remote",
            "baseline:title",
            "baseline:abstract",
            "baseline:full_text",
            "baseline:chunk512:avg",
            "baseline:paragraph:max",
        ] {
            assert_eq!(s.parse::<SystemConfig>().unwrap().to_string(), s);
        }
        assert_eq!("baseline:chunk512".parse::<SystemConfig>().unwrap().to_string(), "baseline:chunk512:max");
        for bad in ["register", "register:psychic", "baseline:title:avg", "baseline:x", "x:y", "register:random:zz"] {
            assert!(bad.parse::<SystemConfig>().is_err(), "{bad}");
        }
        assert_eq!(parse_systems("register:oracle, baseline:abstract").unwrap().len(), 2);
    }

    #[test]
    fn query_loader_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        let corpus = set(&["p1", "7"]);
        let schemas = SchemaSet::bundled();
        std::fs::write(
            &path,
            "{\"query\":\"q\",\"relevant_ids\":[\"p1\"],\"granularity_tag\":\"coarse\"}\n\n{\"query\":\"lit\",\"corpusids\":[7]}\n",
        )
        .unwrap();
        let qs = load_queries(&path, &corpus, &schemas).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[1].relevant_ids, set(&["7"]));

        for (bad, needle) in [
            ("{\"query\":\"q\",\"relevant_ids\":[]}", "empty"),
            ("{\"query\":\"q\",\"relevant_ids\":[\"zz\"]}", "not in the corpus"),
            (
                "{\"query\":\"q\",\"relevant_ids\":[\"p1\"],\"golden_view\":\"Abstract/Nope\",\"schema_type\":\"survey\"}",
                "not valid",
            ),
            ("not json", ":1:"),
        ] {
            std::fs::write(&path, format!("{bad}\n")).unwrap();
            let err = load_queries(&path, &corpus, &schemas).unwrap_err().to_string();
            assert!(err.contains(needle), "{err}");
        }
    }
}
