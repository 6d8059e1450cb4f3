use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

/// One invariant re-checked after a run.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: Value,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: Value) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

/// What every subcommand writes. `wall_time` is the only field that varies
/// between identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub config: String,
    pub outputs: Value,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub wall_time: f64,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.error.is_some() {
            1
        } else if self.checks.iter().any(|c| !c.pass) {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are finite-safe JSON");
        s.push('\n');
        s
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
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
