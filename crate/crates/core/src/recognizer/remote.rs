use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Candidate, LexicalRecognizer, Recognizer, RecognizerError, ViewCatalog};
use crate::model::{Endpoint, InFlight, Transport};
use crate::schema::NodePath;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteRecognizerConfig {
    pub endpoint: Endpoint,
    /// On transport or reply errors answer from the lexical recognizer instead of failing.
    #[serde(default = "yes")]
    pub fallback_on_error: bool,
    #[serde(default = "eight")]
    pub max_in_flight: usize,
}

fn yes() -> bool {
    true
}

fn eight() -> usize {
    8
}

/// Recognizer service speaking `{query, k}` → `{paths: [...]}`.
///
/// Returned paths are checked against the catalog's prefix tree; invalid ones
/// are dropped and the shortfall is backfilled from the lexical ranking.
pub struct RemoteRecognizer {
    transport: Arc<dyn Transport>,
    config: RemoteRecognizerConfig,
    lexical: LexicalRecognizer,
    in_flight: InFlight,
}

impl RemoteRecognizer {
    pub fn new(transport: Arc<dyn Transport>, config: RemoteRecognizerConfig, catalog: ViewCatalog) -> Self {
        RemoteRecognizer {
            transport,
            in_flight: InFlight::new(config.max_in_flight),
            config,
            lexical: LexicalRecognizer::new(catalog),
        }
    }

    fn ask(&self, query: &str, k: usize) -> Result<Vec<String>, RecognizerError> {
        let reply = {
            let _slot = self.in_flight.acquire();
            self.transport.post_json(
                &self.config.endpoint.url,
                self.config.endpoint.key.as_deref(),
                &json!({"query": query, "k": k}),
            )?
        };
        let paths = reply
            .get("paths")
            .and_then(Value::as_array)
            .ok_or_else(|| RecognizerError::Reply("missing \"paths\" array".into()))?;
        Ok(paths.iter().filter_map(Value::as_str).map(str::to_string).collect())
    }
}

impl Recognizer for RemoteRecognizer {
    fn name(&self) -> &str {
        "remote"
    }

    fn catalog(&self) -> &ViewCatalog {
        self.lexical.catalog()
    }

    fn propose(&self, query: &str, k: usize) -> Result<Vec<Candidate>, RecognizerError> {
        let remote = match self.ask(query, k) {
            Ok(paths) => paths,
            Err(e) if self.config.fallback_on_error => {
                tracing::warn!(error = %e, "remote recognizer failed, using lexical recognizer");
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        let catalog = self.catalog();
        let mut chosen: Vec<NodePath> = Vec::new();
        for raw in remote {
            match NodePath::parse(raw.trim()) {
                Some(path) if catalog.contains(&path) && !chosen.contains(&path) => chosen.push(path),
                _ => tracing::debug!(path = %raw, "dropping invalid remote view"),
            }
            if chosen.len() == k {
                break;
            }
        }
        if chosen.len() < k {
            let entries = catalog.entries();
            for (i, _) in self.lexical.rank(query) {
                let path = &entries[i].view.path;
                if !chosen.contains(path) {
                    chosen.push(path.clone());
                }
                if chosen.len() == k {
                    break;
                }
            }
        }
        Ok(chosen
            .into_iter()
            .map(|p| Candidate {
                path: p.to_string(),
                score: None,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CountingTransport, TransportError};
    use crate::recognizer::identify;
    use crate::schema::SchemaSet;

    struct Canned(Value);

    impl Transport for Canned {
        fn post_json(&self, _: &str, _: Option<&str>, body: &Value) -> Result<Value, TransportError> {
            assert!(body.get("query").is_some() && body.get("k").is_some());
            Ok(self.0.clone())
        }
    }

    fn recognizer(transport: Arc<dyn Transport>, fallback: bool) -> RemoteRecognizer {
        let config = RemoteRecognizerConfig {
            endpoint: Endpoint {
                url: "http://recognizer.invalid/identify".into(),
                key: None,
                model: String::new(),
            },
            fallback_on_error: fallback,
            max_in_flight: 2,
        };
        RemoteRecognizer::new(transport, config, ViewCatalog::new(&SchemaSet::bundled()))
    }

    #[test]
    fn invalid_path_is_backfilled() {
        let reply = json!({"paths": [
            "Abstract/Method",
            "Abstract/Not/A/Node",
            "Abstract/Experiment/Dataset",
            "Abstract/Method/Implementation/Operation",
            "Abstract/Conclusion",
        ]});
        let rec = recognizer(Arc::new(Canned(reply)), true);
        let out = identify(&rec, "optimizer settings", 5).unwrap();
        assert_eq!(out.views.len(), 5);
        let first4: Vec<String> = out.views[..4].iter().map(|v| v.path.to_string()).collect();
        assert_eq!(
            first4,
            [
                "Abstract/Method",
                "Abstract/Experiment/Dataset",
                "Abstract/Method/Implementation/Operation",
                "Abstract/Conclusion"
            ]
        );
        let lexical = LexicalRecognizer::for_schemas(&SchemaSet::bundled());
        let expected_fill = identify(&lexical, "optimizer settings", 10)
            .unwrap()
            .views
            .into_iter()
            .find(|v| !out.views[..4].contains(v))
            .unwrap();
        assert_eq!(out.views[4], expected_fill);
    }

    #[test]
    fn all_invalid_is_pure_lexical() {
        let rec = recognizer(Arc::new(Canned(json!({"paths": ["x/y", "", "Abstract/Nope"]}))), true);
        let lexical = LexicalRecognizer::for_schemas(&SchemaSet::bundled());
        assert_eq!(
            identify(&rec, "benchmark annotation", 5).unwrap().views,
            identify(&lexical, "benchmark annotation", 5).unwrap().views
        );
    }

    #[test]
    fn replayed_valid_paths_kept_in_order() {
        let paths = ["Abstract/Experiment/Result/Ablation", "Abstract", "Abstract/Background/Task"];
        let rec = recognizer(Arc::new(Canned(json!({ "paths": paths }))), true);
        let got: Vec<String> = identify(&rec, "q", 3).unwrap().views.iter().map(|v| v.path.to_string()).collect();
        assert_eq!(got, paths);
    }

    #[test]
    fn transport_failure_fallback_is_configurable() {
        let offline = Arc::new(CountingTransport::offline());
        let rec = recognizer(offline.clone(), true);
        assert_eq!(identify(&rec, "metric", 2).unwrap().views.len(), 2);
        assert_eq!(offline.requests(), 1);
        let strict = recognizer(Arc::new(CountingTransport::offline()), false);
        assert!(matches!(identify(&strict, "metric", 2), Err(RecognizerError::Transport(_))));
    }
}
