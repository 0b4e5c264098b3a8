use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::fail::{CliResult, Failure};

/// Writes `bytes` to `path` through a sibling temporary file, so a failure
/// never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let err = |e: std::io::Error| Failure::io(format!("{}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}
