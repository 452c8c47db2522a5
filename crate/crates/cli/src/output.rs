//! Atomic file output and CSV formatting.

use std::fs;
use std::io::Write;
use std::path::Path;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Renders a CSV from a header and rows.
pub fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::with_capacity(4096);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Fixed-width scientific notation; stable across platforms.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        format!("{v}")
    }
}
