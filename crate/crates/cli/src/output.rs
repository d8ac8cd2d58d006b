use std::io::{self, Write};
use std::path::Path;

/// 12 significant digits in scientific notation, e.g. `2.51111111111e1`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`. Readers never see a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
