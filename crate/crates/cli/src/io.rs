use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

/// Write-to-temp then rename, so a reader never sees a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let fail = |e: std::io::Error| CliError::data(format!("cannot write {}: {e}", path.display())).with_code("io");
    std::fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("records serialize") + "\n")
        .collect()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("records serialize") + "\n"
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::data(format!("{} not found; run the earlier stage first or pass the file explicitly", path.display()))
                .with_code("missing_input")
        } else {
            CliError::data(format!("cannot read {}: {e}", path.display())).with_code("io")
        }
    })
}

/// JSON lines, or a single JSON array/object.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = read_text(path)?;
    let bad = |line: usize, e: serde_json::Error| {
        CliError::data(format!("{} line {line}: {e}", path.display())).with_code("schema_error")
    };
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| bad(e.line(), e));
    }
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() > 1 && trimmed.starts_with('{') && serde_json::from_str::<serde_json::Value>(lines[0]).is_err() {
        return serde_json::from_str::<T>(&text).map(|v| vec![v]).map_err(|e| bad(e.line(), e));
    }
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(i + 1, e)))
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), e.line())).with_code("schema_error"))
}

/// `outputs/{stage}/{run_id}` plus the config snapshot inside it.
pub struct StageDir {
    pub path: PathBuf,
}

impl StageDir {
    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let p = self.file(name);
        write_atomic(&p, contents.as_bytes())?;
        Ok(p)
    }
}

/// File-system friendly version of an id.
pub fn slug(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
