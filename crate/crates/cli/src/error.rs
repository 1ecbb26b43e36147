use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use medipipe_core::chunking::ChunkError;
use medipipe_core::corpus::CorpusError;
use medipipe_core::metrics::MetricsError;
use medipipe_core::providers::ProviderError;
use medipipe_core::rag::RagError;
use medipipe_core::soap::SoapError;
use medipipe_core::tuning::TuningError;
use medipipe_core::vindex::IndexError;
use medipipe_service::{ConfigError, ServeError, StartupError};
use thiserror::Error;

/// Every failure a subcommand can report. The variant decides the exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Io { .. } => 4,
        })
    }

    /// A read failure. A missing input is the caller's mistake, not an I/O
    /// fault, so it maps to a usage error.
    pub fn read(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            CliError::Usage(format!("{}: not found", path.display()))
        } else {
            CliError::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn write(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Precondition(m) => CliError::Usage(m),
            other => CliError::Provider(other.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { path, source } => CliError::read(&path, source),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<RagError> for CliError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Provider { stage, source } => CliError::Provider(format!("{}: {source}", stage.as_str())),
            RagError::Parse { source, .. } => CliError::Provider(format!("generate: unusable output: {source}")),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Io(source) => CliError::Io { path: PathBuf::new(), source },
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Embedding(p) => p.into(),
            MetricsError::External(m) => CliError::Provider(m),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ChunkError> for CliError {
    fn from(e: ChunkError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SoapError> for CliError {
    fn from(e: SoapError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TuningError> for CliError {
    fn from(e: TuningError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Startup(s) => s.into(),
            ServeError::Io(source) => CliError::Io { path: PathBuf::from("<listener>"), source },
        }
    }
}

impl From<StartupError> for CliError {
    fn from(e: StartupError) -> Self {
        match e {
            StartupError::Config(ConfigError::Io { path, source }) => CliError::read(&path, source),
            StartupError::Unwritable { path, source } => CliError::Io { path, source },
            StartupError::Index { source: IndexError::Io(source), path } => CliError::Io { path, source },
            StartupError::Provider(p) => CliError::Usage(format!("provider setup: {p}")),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        StartupError::Config(e).into()
    }
}
