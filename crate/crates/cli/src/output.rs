//! Output files: CSV tables and JSON records, each tagged with the hash of
//! the configuration that produced them.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Write `rows` under `header` to `path`, preceded by a `# config_hash=` line.
pub fn write_csv<I>(path: &Path, hash: &str, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = String>,
{
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# config_hash={hash}")?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Create `dir` (and parents) and return the path of `name` inside it.
pub fn out_file(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(name))
}

/// Read a CSV written by [`write_csv`]: returns the hash and the data lines.
pub fn read_csv(path: &Path) -> Result<(String, Vec<String>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .with_context(|| format!("{} lacks a config hash line", path.display()))?
        .to_string();
    Ok((hash, lines.map(str::to_string).collect()))
}

/// Render an `f64` option for a CSV cell.
pub fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
