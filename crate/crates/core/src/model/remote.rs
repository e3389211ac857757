use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::transport::{Transport, TransportError};
use super::{ModelBackend, ModelError, ModelRequest};

/// A chat-completions or embeddings endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default, skip_serializing)]
    pub key: Option<String>,
    #[serde(default)]
    pub model: String,
}

impl Endpoint {
    fn from_env(url_var: &str, key_var: &str, model: &str) -> Option<Endpoint> {
        let url = std::env::var(url_var).ok().filter(|u| !u.trim().is_empty())?;
        Some(Endpoint {
            url,
            key: std::env::var(key_var).ok().filter(|k| !k.is_empty()),
            model: model.to_string(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub llm: Option<Endpoint>,
    pub embedding: Option<Endpoint>,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            llm: None,
            embedding: None,
            max_retries: 3,
            backoff_ms: 500,
            max_in_flight: 8,
        }
    }
}

impl RemoteConfig {
    /// Reads `REGISTERDEX_LLM_URL/KEY` and `REGISTERDEX_EMB_URL/KEY`.
    pub fn from_env() -> Self {
        RemoteConfig {
            llm: Endpoint::from_env("REGISTERDEX_LLM_URL", "REGISTERDEX_LLM_KEY", "default"),
            embedding: Endpoint::from_env("REGISTERDEX_EMB_URL", "REGISTERDEX_EMB_KEY", "default"),
            ..RemoteConfig::default()
        }
    }
}

/// Counting semaphore bounding concurrent requests.
pub(crate) struct InFlight {
    available: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    pub(crate) fn new(limit: usize) -> Self {
        InFlight {
            available: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> InFlightGuard<'_> {
        let mut available = self.available.lock().expect("in-flight lock");
        while *available == 0 {
            available = self.freed.wait(available).expect("in-flight lock");
        }
        *available -= 1;
        InFlightGuard(self)
    }
}

pub(crate) struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("in-flight lock") += 1;
        self.0.freed.notify_one();
    }
}

/// Talks to OpenAI-style chat-completions and embeddings endpoints.
pub struct RemoteBackend {
    transport: Arc<dyn Transport>,
    config: RemoteConfig,
    in_flight: InFlight,
}

impl RemoteBackend {
    pub fn new(transport: Arc<dyn Transport>, config: RemoteConfig) -> Self {
        let in_flight = InFlight::new(config.max_in_flight);
        RemoteBackend {
            transport,
            config,
            in_flight,
        }
    }

    fn post_with_retries(&self, endpoint: &Endpoint, body: &Value) -> Result<Value, TransportError> {
        let _slot = self.in_flight.acquire();
        let mut attempt = 0;
        loop {
            match self.transport.post_json(&endpoint.url, endpoint.key.as_deref(), body) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt);
                    tracing::warn!(attempt, delay_ms = delay, "remote request failed: {e}; retrying");
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl ModelBackend for RemoteBackend {
    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, ModelError> {
        let endpoint = self
            .config
            .llm
            .as_ref()
            .ok_or_else(|| ModelError::Reply("REGISTERDEX_LLM_URL is not configured".into()))?;
        let body = json!({
            "model": endpoint.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": request.prompt()}],
        });
        let reply = self.post_with_retries(endpoint, &body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ModelError::Reply(format!("missing choices[0].message.content in {reply}")))
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ModelError> {
        let endpoint = self
            .config
            .embedding
            .as_ref()
            .ok_or_else(|| ModelError::Reply("REGISTERDEX_EMB_URL is not configured".into()))?;
        let body = json!({"model": endpoint.model, "input": text});
        let reply = self.post_with_retries(endpoint, &body)?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ModelError::Reply("missing data[0].embedding".into()))?;
        values
            .iter()
            .map(|v| v.as_f64().map(|f| f as f32).ok_or(ModelError::NonFinite))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PaperDoc;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Fails `failures` times with a retryable error, then answers.
    struct Flaky {
        failures: usize,
        seen: AtomicUsize,
        answer: Value,
    }

    impl Transport for Flaky {
        fn post_json(&self, _url: &str, _bearer: Option<&str>, _body: &Value) -> Result<Value, TransportError> {
            let n = self.seen.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(TransportError::Status {
                    status: 503,
                    body: "busy".into(),
                })
            } else {
                Ok(self.answer.clone())
            }
        }
    }

    fn config() -> RemoteConfig {
        RemoteConfig {
            llm: Some(Endpoint {
                url: "http://llm".into(),
                key: Some("k".into()),
                model: "m".into(),
            }),
            embedding: Some(Endpoint {
                url: "http://emb".into(),
                key: None,
                model: "e".into(),
            }),
            max_retries: 3,
            backoff_ms: 0,
            max_in_flight: 2,
        }
    }

    #[test]
    fn retries_up_to_three_times() {
        let answer = json!({"choices": [{"message": {"content": "Survey and Review"}}]});
        let transport = Arc::new(Flaky {
            failures: 3,
            seen: AtomicUsize::new(0),
            answer: answer.clone(),
        });
        let backend = RemoteBackend::new(transport.clone(), config());
        let doc = PaperDoc::new("d", "t", "a", "");
        let reply = backend
            .complete(&ModelRequest::Classify {
                abstract_text: &doc.abstract_text,
            })
            .unwrap();
        assert_eq!(reply, "Survey and Review");
        assert_eq!(transport.seen.load(Ordering::SeqCst), 4);

        let transport = Arc::new(Flaky {
            failures: 4,
            seen: AtomicUsize::new(0),
            answer,
        });
        let backend = RemoteBackend::new(transport.clone(), config());
        assert!(backend.complete(&ModelRequest::Classify { abstract_text: "a" }).is_err());
        assert_eq!(transport.seen.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn parses_embedding_payload() {
        let transport = Arc::new(Flaky {
            failures: 0,
            seen: AtomicUsize::new(0),
            answer: json!({"data": [{"embedding": [0.5, -1.0]}]}),
        });
        let backend = RemoteBackend::new(transport, config());
        assert_eq!(backend.embed("x").unwrap(), vec![0.5, -1.0]);
    }
}
