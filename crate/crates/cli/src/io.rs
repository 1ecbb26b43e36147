//! File helpers shared by the subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use medipipe_core::providers::{
    Embedder, Generator, HttpProvider, MockEmbedder, MockGenerator, ProviderEndpoint,
};

use crate::{CliError, ProviderArgs};

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::read(path, e))
}

/// Writes through a sibling temp file so a failed run never leaves a torn
/// output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().ok_or_else(|| CliError::usage(format!("{}: not a file path", path.display())))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| CliError::write(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::write(path, e)
    })
}

/// `--out` when given, stdout otherwise.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| CliError::write(Path::new("<stdout>"), e))
        }
    }
}

/// File name up to its first dot: `D0001.note.txt` → `D0001`.
pub fn file_id(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    let id = name.split('.').next()?;
    (!id.is_empty()).then(|| id.to_string())
}

pub struct ProviderSet {
    pub embedder: Arc<dyn Embedder>,
    pub generator: Arc<dyn Generator>,
}

pub fn providers(args: &ProviderArgs) -> Result<ProviderSet, CliError> {
    if args.provider == "mock" {
        if args.mock_dim == 0 {
            return Err(CliError::usage("--mock-dim must be > 0"));
        }
        return Ok(ProviderSet {
            embedder: Arc::new(MockEmbedder { dim: args.mock_dim }),
            generator: Arc::new(MockGenerator),
        });
    }
    let endpoint = ProviderEndpoint::new(args.provider.clone())
        .and_then(|e| e.with_timeout_ms(args.timeout_ms))
        .map_err(|e| CliError::usage(format!("--provider: {e}")))?;
    let http = Arc::new(HttpProvider::new(endpoint).map_err(|e| CliError::usage(format!("--provider: {e}")))?);
    Ok(ProviderSet { embedder: http.clone(), generator: http })
}
