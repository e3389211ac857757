//! JSON-over-HTTP transport, injectable so tests can count or forbid network use.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("network access is disabled")]
    Offline,
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Unreachable(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Decode(_) | TransportError::Offline => false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError>;
}

/// Blocking HTTP client.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        let mut request = self.client.post(url).json(body);
        if let Some(key) = bearer {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(TransportError::Status {
                status: status.as_u16(),
                body,
            });
        }
        response
            .json::<Value>()
            .map_err(|e| TransportError::Decode(e.to_string()))
    }
}

/// Refuses every request. Used wherever a run must stay offline.
#[derive(Debug, Default, Clone, Copy)]
pub struct OfflineTransport;

impl Transport for OfflineTransport {
    fn post_json(&self, _url: &str, _bearer: Option<&str>, _body: &Value) -> Result<Value, TransportError> {
        Err(TransportError::Offline)
    }
}

/// Wraps a transport and counts attempted requests.
pub struct CountingTransport {
    inner: Arc<dyn Transport>,
    requests: AtomicUsize,
}

impl CountingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        CountingTransport {
            inner,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn offline() -> Self {
        CountingTransport::new(Arc::new(OfflineTransport))
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Transport for CountingTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.inner.post_json(url, bearer, body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn counting_transport_counts_refused_requests() {
        let t = CountingTransport::offline();
        assert_eq!(t.requests(), 0);
        assert!(matches!(
            t.post_json("http://x", None, &json!({})),
            Err(TransportError::Offline)
        ));
        assert_eq!(t.requests(), 1);
    }

    #[test]
    fn retryable_classification() {
        assert!(TransportError::Unreachable("x".into()).is_retryable());
        assert!(TransportError::Status { status: 503, body: String::new() }.is_retryable());
        assert!(TransportError::Status { status: 429, body: String::new() }.is_retryable());
        assert!(!TransportError::Status { status: 400, body: String::new() }.is_retryable());
        assert!(!TransportError::Offline.is_retryable());
    }
}
