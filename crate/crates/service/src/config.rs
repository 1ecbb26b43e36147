//! Service configuration, read from a TOML file.
//!
//! ```toml
//! listen_addr = "127.0.0.1:8080"
//! index_path = "data/index.mpvx"
//! # notes_dir defaults to <index dir>/notes, snapshot_path to <index dir>/sessions.json
//! snapshot_interval_s = 30
//! cors_origins = ["http://localhost:5173"]
//!
//! [providers.asr]
//! mock = true
//! [providers.embed]
//! endpoint = "http://127.0.0.1:9000"
//! timeout_ms = 30000
//! [providers.generate]
//! mock = true
//!
//! [rag]
//! k = 4
//! chunk_size = 1000
//! chunk_overlap = 150
//! max_context_chars = 4000
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use medipipe_core::chunking::{ChunkConfig, DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP};
use medipipe_core::providers::DEFAULT_MOCK_DIM;
use medipipe_core::rag::{RagConfig, DEFAULT_MAX_CONTEXT_CHARS, DEFAULT_SYSTEM_PROMPT};
use medipipe_core::vindex::DEFAULT_K;
use serde::Deserialize;
use thiserror::Error;

/// Env var naming the config file when no path is given explicitly.
pub const CONFIG_ENV_VAR: &str = "MEDIPIPE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("no config file given and {CONFIG_ENV_VAR} is not set")]
    Missing,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint: Option<String>,
    #[serde(default)]
    pub mock: bool,
    pub timeout_ms: Option<u64>,
    /// Dimension of the mock embedder.
    pub dim: Option<usize>,
}

impl ProviderConfig {
    pub fn mock() -> Self {
        ProviderConfig { mock: true, ..Default::default() }
    }

    pub fn endpoint(url: impl Into<String>) -> Self {
        ProviderConfig { endpoint: Some(url.into()), ..Default::default() }
    }

    fn validate(&self, name: &str) -> Result<(), ConfigError> {
        match (&self.endpoint, self.mock) {
            (Some(_), true) => Err(ConfigError::Invalid(format!("providers.{name}: set either endpoint or mock, not both"))),
            (None, false) => Err(ConfigError::Invalid(format!("providers.{name}: set endpoint or mock = true"))),
            _ => Ok(()),
        }
    }

    pub fn mock_dim(&self) -> usize {
        self.dim.unwrap_or(DEFAULT_MOCK_DIM)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub asr: ProviderConfig,
    pub embed: ProviderConfig,
    pub generate: ProviderConfig,
}

impl Providers {
    pub fn all_mock() -> Self {
        Providers { asr: ProviderConfig::mock(), embed: ProviderConfig::mock(), generate: ProviderConfig::mock() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RagSection {
    pub k: usize,
    pub system_prompt: String,
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    pub max_context_chars: usize,
}

impl Default for RagSection {
    fn default() -> Self {
        RagSection {
            k: DEFAULT_K,
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            chunk_overlap: DEFAULT_OVERLAP,
            max_context_chars: DEFAULT_MAX_CONTEXT_CHARS,
        }
    }
}

impl RagSection {
    pub fn to_rag_config(&self) -> Result<RagConfig, ConfigError> {
        let chunk = ChunkConfig::new(self.chunk_size, self.chunk_overlap).map_err(|e| ConfigError::Invalid(format!("rag: {e}")))?;
        let cfg = RagConfig {
            k: self.k,
            system_prompt: self.system_prompt.clone(),
            chunk,
            max_context_chars: self.max_context_chars,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(format!("rag: {e}")))?;
        Ok(cfg)
    }
}

fn default_snapshot_interval() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen_addr: SocketAddr,
    pub index_path: PathBuf,
    pub notes_dir: Option<PathBuf>,
    pub snapshot_path: Option<PathBuf>,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval_s: u64,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    pub providers: Providers,
    #[serde(default)]
    pub rag: RagSection,
}

impl ServiceConfig {
    /// All-mock configuration rooted at `data_dir`.
    pub fn offline(data_dir: &Path) -> Self {
        ServiceConfig {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 0)),
            index_path: data_dir.join("index.mpvx"),
            notes_dir: None,
            snapshot_path: None,
            snapshot_interval_s: default_snapshot_interval(),
            cors_origins: Vec::new(),
            providers: Providers::all_mock(),
            rag: RagSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, or the file named by `MEDIPIPE_CONFIG` when `path` is
    /// `None`. Relative paths inside the file resolve against its directory.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from).ok_or(ConfigError::Missing)?,
        };
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            fix(&mut cfg.index_path);
            cfg.notes_dir.as_mut().map(fix);
            cfg.snapshot_path.as_mut().map(fix);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.providers.asr.validate("asr")?;
        self.providers.embed.validate("embed")?;
        self.providers.generate.validate("generate")?;
        if self.snapshot_interval_s == 0 {
            return Err(ConfigError::Invalid("snapshot_interval_s must be > 0".into()));
        }
        if self.index_path.file_name().is_none() {
            return Err(ConfigError::Invalid("index_path must name a file".into()));
        }
        self.rag.to_rag_config().map(|_| ())
    }

    fn data_dir(&self) -> PathBuf {
        self.index_path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn notes_dir(&self) -> PathBuf {
        self.notes_dir.clone().unwrap_or_else(|| self.data_dir().join("notes"))
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.snapshot_path.clone().unwrap_or_else(|| self.data_dir().join("sessions.json"))
    }
}
