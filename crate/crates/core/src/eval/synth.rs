//! Seeded generator for corpora with planted, granularity-tagged queries.
//!
//! Every leaf section holds a key sentence and a detail sentence. Key terms are
//! drawn from a small pool shared by all papers with the same leaf path, while
//! detail terms are unique to one paper. Under the fixture backend a parent
//! keeps the first sentence of each child, so key terms climb the tree and
//! detail terms stay at the leaves. Queries aimed at a leaf use its detail
//! terms; queries aimed at a higher node mix key terms of several descendants.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalQuery;
use crate::model::section_heading;
use crate::model::PaperDoc;
use crate::recognizer::RecognizerExample;
use crate::schema::{NodePath, PaperType, RegisterSchema, SchemaSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub papers: usize,
    pub seed: u64,
    /// Size of the shared key-term pool behind each leaf path.
    pub key_pool: usize,
    /// Probability that a leaf section is left out of a paper.
    pub blank_rate: f64,
    /// Share of non-blank leaves whose key sentence is echoed in the abstract.
    pub abstract_coverage: f64,
    /// Descendant leaves sampled for a query aimed at an internal node.
    pub internal_query_terms: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            papers: 200,
            seed: 7,
            key_pool: 12,
            blank_rate: 0.1,
            abstract_coverage: 0.6,
            internal_query_terms: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub docs: Vec<PaperDoc>,
    pub queries: Vec<EvalQuery>,
    /// The same queries as view-recognition examples.
    pub examples: Vec<RecognizerExample>,
}

pub fn granularity_tag(depth: usize) -> &'static str {
    match depth {
        0 | 1 => "coarse",
        2 => "fine-1",
        3 => "fine-2",
        _ => "fine-3",
    }
}

fn marker(t: PaperType) -> &'static str {
    match t {
        PaperType::AlgorithmInnovation => "We propose",
        PaperType::BenchmarkConstruction => "Here we introduce a benchmark on",
        PaperType::MechanismExploration => "In this work we investigate",
        PaperType::Survey => "In this article we survey",
        PaperType::TheoryProof => "We prove results about",
    }
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Pronounceable nonsense words, never repeated within one generator.
struct Words {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Words {
    fn fresh(&mut self) -> String {
        loop {
            let w: String = (0..3)
                .map(|_| {
                    let o = ONSETS.choose(&mut self.rng).unwrap();
                    let v = VOWELS.choose(&mut self.rng).unwrap();
                    format!("{o}{v}")
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn many(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

struct Leaf {
    path: NodePath,
    key: Vec<String>,
    detail: Vec<String>,
}

struct Planted {
    doc: PaperDoc,
    paper_type: PaperType,
    leaves: Vec<Leaf>,
}

fn plant_paper(
    n: usize,
    schema: &RegisterSchema,
    pools: &BTreeMap<String, Vec<String>>,
    topics: &[String],
    words: &mut Words,
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
) -> Planted {
    let title_words: Vec<&String> = topics.choose_multiple(rng, 2).collect();
    let title = format!("On {} {}", title_words[0], title_words[1]);
    let mut leaves = Vec::new();
    let mut full_text = format!("{title}.\n\n");
    for path in schema.leaf_paths() {
        if rng.random_bool(cfg.blank_rate) {
            continue;
        }
        let pool = &pools[&path.to_string()];
        let key: Vec<String> = pool.choose_multiple(rng, 2).cloned().collect();
        let detail = words.many(3);
        full_text.push_str(&format!(
            "{}\n{}. {}.\n\n",
            section_heading(&path),
            key.join(" "),
            detail.join(" ")
        ));
        leaves.push(Leaf { path, key, detail });
    }
    let mut echoed: Vec<&Leaf> = leaves.iter().filter(|_| rng.random_bool(cfg.abstract_coverage)).collect();
    echoed.shuffle(rng);
    let echo: Vec<String> = echoed.iter().map(|l| l.key.join(" ")).collect();
    let abstract_text = format!("{} {} {}. {}.", marker(schema.paper_type), title_words[0], title_words[1], echo.join(" "));
    Planted {
        doc: PaperDoc::new(&format!("synth-{n:04}"), &title, &abstract_text, full_text.trim_end()),
        paper_type: schema.paper_type,
        leaves,
    }
}

/// Query text for `target`, or `None` when nothing below it was written.
fn query_for(paper: &Planted, target: &NodePath, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Option<String> {
    let below: Vec<&Leaf> = paper.leaves.iter().filter(|l| l.path.starts_with(target)).collect();
    match below.as_slice() {
        [] => None,
        [only] if only.path == *target => Some(only.detail.join(" ")),
        _ => {
            let picked: Vec<&&Leaf> = below.choose_multiple(rng, cfg.internal_query_terms).collect();
            let terms: Vec<&str> = picked.iter().map(|l| l.key.choose(rng).unwrap().as_str()).collect();
            Some(terms.join(" "))
        }
    }
}

/// A corpus plus one query per granularity tag and paper, where the schema allows it.
pub fn generate(schemas: &SchemaSet, cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut words = Words {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed),
        used: HashSet::new(),
    };
    let mut pools = BTreeMap::new();
    for schema in schemas.iter() {
        for path in schema.leaf_paths() {
            pools
                .entry(path.to_string())
                .or_insert_with(|| words.many(cfg.key_pool.max(2)));
        }
    }
    let topics = words.many(40);
    let types = PaperType::ALL;

    let mut docs = Vec::with_capacity(cfg.papers);
    let mut queries = Vec::new();
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for n in 0..cfg.papers {
        let t = *types.choose(&mut rng).unwrap();
        let schema = schemas.get(t);
        let paper = plant_paper(n, schema, &pools, &topics, &mut words, &mut rng, cfg);
        for depth in 1..=schema.depth() {
            let targets: Vec<NodePath> = schema.all_paths().into_iter().filter(|p| p.len() == depth).collect();
            let mut order: Vec<&NodePath> = targets.iter().collect();
            order.shuffle(&mut rng);
            let found = order
                .into_iter()
                .find_map(|p| query_for(&paper, p, cfg, &mut rng).map(|q| (p.clone(), q)));
            let Some((view, query)) = found else { continue };
            if !seen.insert(query.clone()) {
                continue;
            }
            queries.push(EvalQuery {
                query: query.clone(),
                relevant_ids: [paper.doc.id.clone()].into(),
                granularity_tag: Some(granularity_tag(depth).to_string()),
                golden_view: Some(view.clone()),
                schema_type: Some(paper.paper_type),
            });
            examples.push(RecognizerExample {
                query,
                golden_view: view,
                schema_type: paper.paper_type,
                paper_id: Some(paper.doc.id.clone()),
            });
        }
        docs.push(paper.doc);
    }
    SynthCorpus { docs, queries, examples }
}
