//! Layered configuration: flags > environment > config file > defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use registerdex::index::IndexKind;
use registerdex::register::OnExtractError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    /// Deterministic rule-based stand-in, no network.
    Fixture,
    /// Answers only from the transcript store.
    Replay,
    /// Calls `record_from` and appends new exchanges to the transcript store.
    Record,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    Remote,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RecognizerBackend {
    Lexical,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub corpus: PathBuf,
    /// Directory of schema JSON files; the bundled schemas when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_dir: Option<PathBuf>,
    pub registers: PathBuf,
    pub index_dir: PathBuf,
    pub kind: IndexKind,
    pub k: usize,
    pub m: usize,
    pub recognizer: RecognizerBackend,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recognizer_url: Option<String>,
    pub recognizer_fallback: bool,
    pub model: ModelMode,
    pub record_from: RecordSource,
    pub transcripts: PathBuf,
    pub embedding_dim: usize,
    pub max_content_chars: usize,
    pub normalize: bool,
    pub remove_stopwords: bool,
    pub on_extract_error: OnExtractError,
    pub node_retries: u32,
    pub enrich: bool,
    pub max_parallel_papers: usize,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub request_timeout_ms: u64,
    pub seed: u64,
    pub bind: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            corpus: "corpus.jsonl".into(),
            schema_dir: None,
            registers: "registers.jsonl".into(),
            index_dir: "index".into(),
            kind: IndexKind::Lexical,
            k: 5,
            m: 10,
            recognizer: RecognizerBackend::Lexical,
            recognizer_url: None,
            recognizer_fallback: true,
            model: ModelMode::Fixture,
            record_from: RecordSource::Remote,
            transcripts: "transcripts.jsonl".into(),
            embedding_dim: 64,
            max_content_chars: 4000,
            normalize: false,
            remove_stopwords: false,
            on_extract_error: OnExtractError::Fail,
            node_retries: 1,
            enrich: false,
            max_parallel_papers: 4,
            max_in_flight: 8,
            max_retries: 3,
            backoff_ms: 500,
            request_timeout_ms: 60_000,
            seed: 7,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Clone, Copy)]
enum Ty {
    Str,
    Int,
    Bool,
}

/// Keys settable through `REGISTERDEX_<KEY>` environment variables.
const ENV_KEYS: &[(&str, Ty)] = &[
    ("corpus", Ty::Str),
    ("schema_dir", Ty::Str),
    ("registers", Ty::Str),
    ("index_dir", Ty::Str),
    ("kind", Ty::Str),
    ("k", Ty::Int),
    ("m", Ty::Int),
    ("recognizer", Ty::Str),
    ("recognizer_url", Ty::Str),
    ("recognizer_fallback", Ty::Bool),
    ("model", Ty::Str),
    ("record_from", Ty::Str),
    ("transcripts", Ty::Str),
    ("embedding_dim", Ty::Int),
    ("max_content_chars", Ty::Int),
    ("normalize", Ty::Bool),
    ("remove_stopwords", Ty::Bool),
    ("on_extract_error", Ty::Str),
    ("node_retries", Ty::Int),
    ("enrich", Ty::Bool),
    ("max_parallel_papers", Ty::Int),
    ("max_in_flight", Ty::Int),
    ("max_retries", Ty::Int),
    ("backoff_ms", Ty::Int),
    ("request_timeout_ms", Ty::Int),
    ("seed", Ty::Int),
    ("bind", Ty::Str),
];

pub const CONFIG_ENV: &str = "REGISTERDEX_CONFIG";

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Overrides {
    /// Config file (TOML); defaults to $REGISTERDEX_CONFIG.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registers: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index_dir: Option<PathBuf>,
    /// lexical or dense.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<IndexKind>,
    /// Views used per query.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Papers returned per query.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recognizer: Option<RecognizerBackend>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recognizer_url: Option<String>,
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelMode>,
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_from: Option<RecordSource>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcripts: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    /// Min-max normalize each view's scores before fusion.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_parallel_papers: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bind: Option<String>,
}

fn parse_env(key: &str, ty: Ty, raw: &str) -> anyhow::Result<toml::Value> {
    let bad = || format!("REGISTERDEX_{}={raw:?} is not a valid value", key.to_uppercase());
    Ok(match ty {
        Ty::Str => toml::Value::String(raw.to_string()),
        Ty::Int => toml::Value::Integer(raw.trim().parse().with_context(bad)?),
        Ty::Bool => toml::Value::Boolean(raw.trim().parse().with_context(bad)?),
    })
}

impl ServiceConfig {
    /// Resolves the effective configuration. `env` looks up environment variables.
    pub fn resolve(flags: &Overrides, env: impl Fn(&str) -> Option<String>) -> anyhow::Result<Self> {
        let mut table = toml::Table::try_from(ServiceConfig::default())?;

        let file = flags.config.clone().or_else(|| env(CONFIG_ENV).map(PathBuf::from));
        if let Some(path) = file {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
            let from_file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            table.extend(from_file);
        }
        for &(key, ty) in ENV_KEYS {
            if let Some(raw) = env(&format!("REGISTERDEX_{}", key.to_uppercase())) {
                table.insert(key.to_string(), parse_env(key, ty, &raw)?);
            }
        }
        table.extend(toml::Table::try_from(flags)?);

        let config: ServiceConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_process(flags: &Overrides) -> anyhow::Result<Self> {
        Self::resolve(flags, |k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.k < 1 {
            bail!("k must be at least 1");
        }
        if self.m < 1 {
            bail!("m must be at least 1");
        }
        if self.max_parallel_papers < 1 || self.max_in_flight < 1 {
            bail!("concurrency limits must be at least 1");
        }
        if self.embedding_dim < 1 {
            bail!("embedding_dim must be at least 1");
        }
        if self.recognizer == RecognizerBackend::Remote && self.recognizer_url.is_none() {
            bail!("recognizer = remote needs recognizer_url");
        }
        if let Some(dir) = &self.schema_dir {
            require_exists(dir, "schema_dir")?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn uses_network(&self) -> bool {
        self.model == ModelMode::Remote
            || (self.model == ModelMode::Record && self.record_from == RecordSource::Remote)
            || self.recognizer == RecognizerBackend::Remote
    }
}

pub fn require_exists(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let c = ServiceConfig::resolve(&Overrides::default(), env(&[])).unwrap();
        assert_eq!(c, ServiceConfig::default());
        assert_eq!((c.k, c.m), (5, 10));
    }

    #[test]
    fn precedence_flags_env_file_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "k = 2\nm = 3\nseed = 11\nkind = \"dense\"\n").unwrap();
        let path = file.to_str().unwrap();

        let c = ServiceConfig::resolve(&Overrides::default(), env(&[(CONFIG_ENV, path)])).unwrap();
        assert_eq!((c.k, c.m, c.seed, c.kind), (2, 3, 11, IndexKind::Dense));

        let c = ServiceConfig::resolve(&Overrides::default(), env(&[(CONFIG_ENV, path), ("REGISTERDEX_M", "4")])).unwrap();
        assert_eq!((c.k, c.m), (2, 4));

        let flags = Overrides {
            m: Some(6),
            kind: Some(IndexKind::Lexical),
            ..Default::default()
        };
        let c = ServiceConfig::resolve(&flags, env(&[(CONFIG_ENV, path), ("REGISTERDEX_M", "4")])).unwrap();
        assert_eq!((c.k, c.m, c.kind), (2, 6, IndexKind::Lexical));
    }

    #[test]
    fn bounds_are_rejected() {
        let flags = Overrides {
            k: Some(0),
            ..Default::default()
        };
        assert!(ServiceConfig::resolve(&flags, env(&[])).unwrap_err().to_string().contains("k must"));
        let err = ServiceConfig::resolve(&Overrides::default(), env(&[("REGISTERDEX_M", "0")])).unwrap_err();
        assert!(err.to_string().contains("m must"));
        assert!(ServiceConfig::resolve(&Overrides::default(), env(&[("REGISTERDEX_K", "five")])).is_err());
    }

    #[test]
    fn unknown_file_keys_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "kk = 2\n").unwrap();
        let flags = Overrides {
            config: Some(file),
            ..Default::default()
        };
        assert!(ServiceConfig::resolve(&flags, env(&[])).is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let c = ServiceConfig {
            recognizer_url: Some("http://x".into()),
            ..Default::default()
        };
        let back: ServiceConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
