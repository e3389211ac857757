//! Schemas, model backends, recognizers and the shared transport, built from a config.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};

use registerdex::index::IndexOptions;
use registerdex::model::{
    ContentModel, CountingTransport, Endpoint, FixtureBackend, HttpTransport, ModelBackend, ModelConfig,
    RecordingBackend, RemoteBackend, RemoteConfig, ReplayBackend, TranscriptStore,
};
use registerdex::recognizer::{LexicalRecognizer, Recognizer, RemoteRecognizer, RemoteRecognizerConfig, ViewCatalog};
use registerdex::register::BuildConfig;
use registerdex::schema::SchemaSet;
use registerdex::tokenize::Tokenizer;

use crate::config::{ModelMode, RecognizerBackend, RecordSource, ServiceConfig};

pub struct Runtime {
    pub config: ServiceConfig,
    pub schemas: SchemaSet,
    /// Every outbound request goes through here, so the count is the number of network calls made.
    pub transport: Arc<CountingTransport>,
}

/// A model plus the recorder to flush when running in record mode.
pub struct ModelHandle {
    pub model: ContentModel,
    pub recorder: Option<Arc<RecordingBackend>>,
}

impl ModelHandle {
    pub fn flush(&self) -> anyhow::Result<usize> {
        match &self.recorder {
            Some(r) => Ok(r.flush()?),
            None => Ok(0),
        }
    }
}

impl Runtime {
    pub fn new(config: ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let schemas = match &config.schema_dir {
            Some(dir) => SchemaSet::load_dir(dir).with_context(|| format!("loading schemas from {}", dir.display()))?,
            None => SchemaSet::bundled(),
        };
        let transport = if config.uses_network() {
            let http = HttpTransport::new(Duration::from_millis(config.request_timeout_ms))?;
            CountingTransport::new(Arc::new(http))
        } else {
            CountingTransport::offline()
        };
        Ok(Runtime {
            config,
            schemas,
            transport: Arc::new(transport),
        })
    }

    pub fn network_requests(&self) -> usize {
        self.transport.requests()
    }

    fn model_config(&self) -> ModelConfig {
        ModelConfig {
            max_content_chars: self.config.max_content_chars,
            embedding_dim: self.config.embedding_dim,
        }
    }

    fn remote_backend(&self) -> anyhow::Result<Arc<dyn ModelBackend>> {
        let from_env = RemoteConfig::from_env();
        if from_env.llm.is_none() && from_env.embedding.is_none() {
            bail!("remote model mode needs REGISTERDEX_LLM_URL and/or REGISTERDEX_EMB_URL");
        }
        let config = RemoteConfig {
            max_retries: self.config.max_retries,
            backoff_ms: self.config.backoff_ms,
            max_in_flight: self.config.max_in_flight,
            ..from_env
        };
        Ok(Arc::new(RemoteBackend::new(self.transport.clone(), config)))
    }

    fn fixture_backend(&self) -> Arc<dyn ModelBackend> {
        Arc::new(FixtureBackend::new(self.config.embedding_dim, self.config.seed))
    }

    pub fn model(&self) -> anyhow::Result<ModelHandle> {
        let (backend, recorder): (Arc<dyn ModelBackend>, _) = match self.config.model {
            ModelMode::Fixture => (self.fixture_backend(), None),
            ModelMode::Remote => (self.remote_backend()?, None),
            ModelMode::Replay => {
                let path = &self.config.transcripts;
                if !path.exists() {
                    bail!("transcript store {} does not exist", path.display());
                }
                (Arc::new(ReplayBackend::new(TranscriptStore::load(path)?)), None)
            }
            ModelMode::Record => {
                let inner = match self.config.record_from {
                    RecordSource::Remote => self.remote_backend()?,
                    RecordSource::Fixture => self.fixture_backend(),
                };
                let recorder = Arc::new(RecordingBackend::new(inner, &self.config.transcripts)?);
                (recorder.clone() as Arc<dyn ModelBackend>, Some(recorder))
            }
        };
        Ok(ModelHandle {
            model: ContentModel::new(backend, self.model_config()),
            recorder,
        })
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            on_extract_error: self.config.on_extract_error,
            node_retries: self.config.node_retries,
            enrich_with_source: self.config.enrich,
            max_parallel_papers: self.config.max_parallel_papers,
        }
    }

    pub fn index_options(&self) -> IndexOptions {
        IndexOptions {
            tokenizer: Tokenizer::new(self.config.remove_stopwords),
            ..Default::default()
        }
    }

    pub fn remote_recognizer(&self) -> anyhow::Result<RemoteRecognizer> {
        let url = self.config.recognizer_url.clone().context("recognizer_url is not set")?;
        let config = RemoteRecognizerConfig {
            endpoint: Endpoint {
                url,
                key: None,
                model: String::new(),
            },
            fallback_on_error: self.config.recognizer_fallback,
            max_in_flight: self.config.max_in_flight,
        };
        Ok(RemoteRecognizer::new(self.transport.clone(), config, ViewCatalog::new(&self.schemas)))
    }

    pub fn recognizer(&self) -> anyhow::Result<Box<dyn Recognizer>> {
        Ok(match self.config.recognizer {
            RecognizerBackend::Lexical => Box::new(LexicalRecognizer::for_schemas(&self.schemas)),
            RecognizerBackend::Remote => Box::new(self.remote_recognizer()?),
        })
    }
}

/// Exclusive ownership of an output location for the lifetime of a build.
pub struct BuildLock {
    path: PathBuf,
}

impl BuildLock {
    pub fn acquire(path: &Path) -> anyhow::Result<Self> {
        match std::fs::OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(_) => Ok(BuildLock { path: path.to_path_buf() }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!("{} exists: another build owns this output (remove the file if that build died)", path.display())
            }
            Err(e) => Err(e).with_context(|| format!("creating lock {}", path.display())),
        }
    }
}

impl Drop for BuildLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(".lock");
        let held = BuildLock::acquire(&path).unwrap();
        assert!(BuildLock::acquire(&path).is_err());
        drop(held);
        assert!(BuildLock::acquire(&path).is_ok());
    }

    #[test]
    fn offline_modes_build_without_network() {
        let rt = Runtime::new(ServiceConfig::default()).unwrap();
        let handle = rt.model().unwrap();
        handle.model.embed("x").unwrap();
        assert_eq!(rt.network_requests(), 0);
        let replay = Runtime::new(ServiceConfig {
            model: ModelMode::Replay,
            transcripts: "/nonexistent/t.jsonl".into(),
            ..Default::default()
        })
        .unwrap();
        assert!(replay.model().is_err());
    }
}
