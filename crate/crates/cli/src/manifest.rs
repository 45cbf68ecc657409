use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct GridMeta {
    #[serde(rename = "L")]
    pub l: f64,
    pub n: usize,
}

/// Written next to the outputs of every run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config: Value,
    pub version: String,
    pub grid: Option<GridMeta>,
    pub outputs: Vec<PathBuf>,
    pub duration_s: f64,
}

/// Same command, configuration and version give the same id.
pub fn run_id(command: &str, config: &Value) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(config.to_string().as_bytes());
    h.update([0]);
    h.update(VERSION.as_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Collects outputs while a command runs.
pub struct Run {
    pub id: String,
    command: String,
    config: Value,
    grid: Option<GridMeta>,
    outputs: Vec<PathBuf>,
    start: Instant,
}

impl Run {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            id: run_id(command, &config),
            command: command.to_string(),
            config,
            grid: None,
            outputs: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn grid(&mut self, l: f64, n: usize) {
        self.grid = Some(GridMeta { l, n });
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `value` with the run id added as pretty JSON.
    pub fn write_json(&mut self, path: &Path, mut value: Value) -> Result<(), CliError> {
        if let Value::Object(m) = &mut value {
            m.insert("run_id".into(), Value::String(self.id.clone()));
        }
        write_json_file(path, &value)?;
        self.output(path);
        Ok(())
    }

    pub fn finish(self, manifest_path: &Path) -> Result<RunManifest, CliError> {
        let m = RunManifest {
            run_id: self.id,
            command: self.command,
            config: self.config,
            version: VERSION.to_string(),
            grid: self.grid,
            outputs: self.outputs,
            duration_s: self.start.elapsed().as_secs_f64(),
        };
        write_json_file(manifest_path, &serde_json::to_value(&m).expect("serializable"))?;
        Ok(m)
    }
}

pub fn write_json_file(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| CliError::io(path, e))
}

/// `out.csv` -> `out.csv.manifest.json`; directories get `manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn run_id_is_deterministic() {
        let a = run_id("profile", &json!({"gamma": 2.0}));
        assert_eq!(a, run_id("profile", &json!({"gamma": 2.0})));
        assert_ne!(a, run_id("profile", &json!({"gamma": 3.0})));
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn manifest_beside_file() {
        assert_eq!(manifest_path(Path::new("/nonexistent/a.csv")), PathBuf::from("/nonexistent/a.csv.manifest.json"));
    }
}
