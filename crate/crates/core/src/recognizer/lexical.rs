use std::cmp::Ordering;

use super::{Candidate, Recognizer, RecognizerError, ViewCatalog};
use crate::index::{Bm25Params, LexicalIndex};
use crate::schema::SchemaSet;
use crate::tokenize::Tokenizer;

/// BM25 between the query and each view's node name and description.
pub struct LexicalRecognizer {
    catalog: ViewCatalog,
    index: LexicalIndex,
}

impl LexicalRecognizer {
    pub fn new(catalog: ViewCatalog) -> Self {
        let texts: Vec<(String, String)> = catalog
            .entries()
            .iter()
            .map(|e| (e.view.path.to_string(), e.text.clone()))
            .collect();
        let index = LexicalIndex::build(
            texts.iter().map(|(p, t)| (p.as_str(), t.as_str())),
            Tokenizer::default(),
            Bm25Params::default(),
        );
        LexicalRecognizer { catalog, index }
    }

    pub fn for_schemas(schemas: &SchemaSet) -> Self {
        Self::new(ViewCatalog::new(schemas))
    }

    /// Every catalog view with its score, best first; ties prefer shorter, then smaller paths.
    pub fn rank(&self, query: &str) -> Vec<(usize, f64)> {
        let scores = self.index.score_tokens(&self.index.tokenizer().tokenize(query));
        let entries = self.catalog.entries();
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
        ranked.sort_by(|&(a, sa), &(b, sb)| {
            let (pa, pb) = (&entries[a].view.path, &entries[b].view.path);
            sb.partial_cmp(&sa)
                .unwrap_or(Ordering::Equal)
                .then_with(|| pa.len().cmp(&pb.len()))
                .then_with(|| pa.cmp(pb))
        });
        ranked
    }
}

impl Recognizer for LexicalRecognizer {
    fn name(&self) -> &str {
        "lexical"
    }

    fn catalog(&self) -> &ViewCatalog {
        &self.catalog
    }

    fn propose(&self, query: &str, k: usize) -> Result<Vec<Candidate>, RecognizerError> {
        let entries = self.catalog.entries();
        Ok(self
            .rank(query)
            .into_iter()
            .take(k)
            .map(|(i, s)| Candidate {
                path: entries[i].view.path.to_string(),
                score: Some(s),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recognizer::identify;
    use crate::schema::NodePath;
    use std::collections::BTreeMap;

    #[test]
    fn description_text_retrieves_its_own_node() {
        let schemas = SchemaSet::bundled();
        let rec = LexicalRecognizer::for_schemas(&schemas);
        let mut misses = Vec::new();
        for schema in schemas.iter() {
            for (path, node) in schema.walk() {
                let out = identify(&rec, &node.description, 1).unwrap();
                assert_eq!(out.views.len(), 1);
                if out.views[0].path != path {
                    misses.push(format!("{path} -> {}", out.views[0].path));
                }
            }
        }
        assert!(misses.is_empty(), "{misses:#?}");
    }

    #[test]
    fn no_overlap_falls_back_to_short_then_lexicographic() {
        let rec = LexicalRecognizer::for_schemas(&SchemaSet::bundled());
        let out = identify(&rec, "zzzz qqqq", 3).unwrap();
        let paths: Vec<String> = out.views.iter().map(|v| v.path.to_string()).collect();
        assert_eq!(paths[0], "Abstract");
        assert_eq!(out.views[1].path.len(), 2);
        assert!(out.views[1].path < out.views[2].path);
        assert!(out.scores.unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn shared_paths_appear_once() {
        let rec = LexicalRecognizer::for_schemas(&SchemaSet::bundled());
        let out = identify(&rec, "future work directions", 200).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        assert!(out.views.iter().all(|v| seen.insert(v.path.clone())));
        assert_eq!(out.views.len(), rec.catalog().len());
    }

    /// Independent BM25 over the catalog texts, then a full sort.
    fn brute_force(rec: &LexicalRecognizer, query: &str, k: usize) -> Vec<NodePath> {
        let docs: Vec<Vec<String>> = rec
            .catalog()
            .entries()
            .iter()
            .map(|e| crate::tokenize::tokenize(&e.text))
            .collect();
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let q = crate::tokenize::tokenize(query);
        let mut scored: Vec<(f64, NodePath)> = docs
            .iter()
            .zip(rec.catalog().entries())
            .map(|(d, e)| {
                let mut s = 0.0;
                for t in &q {
                    let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                    let tf = d.iter().filter(|x| *x == t).count() as f64;
                    if tf == 0.0 {
                        continue;
                    }
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    s += idf * tf * 2.5 / (tf + 1.5 * (0.25 + 0.75 * d.len() as f64 / avgdl));
                }
                (s, e.view.path.clone())
            })
            .collect();
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.len().cmp(&b.1.len()))
                .then(a.1.cmp(&b.1))
        });
        scored.into_iter().take(k).map(|(_, p)| p).collect()
    }

    #[test]
    fn matches_brute_force_scan() {
        let rec = LexicalRecognizer::for_schemas(&SchemaSet::bundled());
        let queries = [
            "which optimizer and learning rate schedule did they use",
            "papers that propose a new benchmark dataset",
            "main theorem convergence bound",
            "taxonomy of graph neural network methods",
            "ablation study of the attention module",
            "why do transformers exhibit in-context learning",
            "limitations of previous approaches",
            "evaluation metric accuracy f1",
            "open problems and future directions",
            "annotation process for the data",
        ];
        let mut seen_top = BTreeMap::new();
        for q in queries {
            let got = identify(&rec, q, 5).unwrap().paths();
            assert_eq!(got, brute_force(&rec, q, 5), "{q}");
            seen_top.insert(q, got[0].clone());
        }
        assert!(seen_top.values().collect::<std::collections::BTreeSet<_>>().len() > 3);
    }
}
