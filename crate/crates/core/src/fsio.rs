//! Atomic file writes: temp file in the target directory, then rename.

use crate::error::Result;
use std::io::Write;
use std::path::Path;

/// Write `bytes` to `path` atomically. The destination either keeps its old
/// content or holds the complete new content; never a partial write.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
