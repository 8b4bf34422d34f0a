//! Atomic file output: everything lands via temp file + rename so a
//! crashed run never leaves a half-written artifact.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Write bytes atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_dir(path);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("moving temp file into {}", path.display()))?;
    Ok(())
}

/// Atomically write a file produced by a path-taking writer (PGM/PNG
/// encoders, CSV writers). The temp name keeps the final extension so
/// format dispatch still works.
pub fn write_via_path_atomic(path: &Path, writer: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let dir = parent_dir(path);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("output path has no file name")?;
    let tmp_path = dir.join(format!(".tmp-{}-{file_name}", std::process::id()));
    writer(&tmp_path)?;
    std::fs::rename(&tmp_path, path)
        .with_context(|| format!("moving temp image into {}", path.display()))?;
    Ok(())
}

/// Pretty JSON with a trailing newline; stable field order makes re-runs
/// byte-identical.
pub fn to_json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).context("serializing JSON")?;
    bytes.push(b'\n');
    Ok(bytes)
}
