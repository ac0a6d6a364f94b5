//! Two-column manifests: `first_path,second_path` per line.
//!
//! Blank lines and `#` comments are skipped. Relative paths resolve against
//! the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::commands::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub first: PathBuf,
    pub second: PathBuf,
    /// The second column as written, used to name samples.
    pub label: String,
}

pub fn read(path: &Path) -> Result<Vec<Entry>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse(&text, base).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
}

pub fn parse(text: &str, base: &Path) -> Result<Vec<Entry>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: expected two comma-separated paths", i + 1))?;
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() || b.contains(',') {
            return Err(format!("line {}: expected two comma-separated paths", i + 1));
        }
        out.push(Entry {
            first: base.join(a),
            second: base.join(b),
            label: b.to_string(),
        });
    }
    Ok(out)
}

pub fn render(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a},{b}\n")).collect()
}
