//! Artifact writing. Every file carries the config hash; the wall-clock
//! timestamp lives only in `metadata.json` so the other outputs are
//! byte-identical across runs of the same config.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;

pub struct Artifacts {
    dir: PathBuf,
    config: ExperimentConfig,
    hash: String,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path, config: &ExperimentConfig) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), hash: config.hash(), config: config.clone(), written: Vec::new() })
    }

    pub fn config_json(&self) -> Value {
        let values: Map<String, Value> =
            self.config.values().iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        json!({ "command": self.config.command(), "values": values })
    }

    fn write(&mut self, name: &str, body: &str) -> io::Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// `<command>.json` with the config, its hash, the pass flag and the
    /// command-specific result.
    pub fn summary(&mut self, passed: bool, result: Value) -> io::Result<()> {
        let doc = json!({
            "config_hash": self.hash,
            "config": self.config_json(),
            "passed": passed,
            "result": result,
        });
        let name = format!("{}.json", self.config.command());
        self.write(&name, &(serde_json::to_string_pretty(&doc)? + "\n"))
    }

    /// CSV whose first line is `# config_hash=<hash>`.
    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> io::Result<()> {
        let mut body = format!("# config_hash={}\n{header}\n", self.hash);
        for r in rows {
            body += r;
            body.push('\n');
        }
        self.write(name, &body)
    }

    /// Plain text with a `#` provenance line.
    pub fn text(&mut self, name: &str, text: &str) -> io::Result<()> {
        let body = format!("# config_hash={}\n{text}", self.hash);
        self.write(name, &body)
    }

    pub fn finish(mut self) -> io::Result<Vec<String>> {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut files = self.written.clone();
        files.push("metadata.json".into());
        let doc = json!({
            "config_hash": self.hash,
            "command": self.config.command(),
            "version": env!("CARGO_PKG_VERSION"),
            "files": files,
            "timestamp_unix": secs,
        });
        self.write("metadata.json", &(serde_json::to_string_pretty(&doc)? + "\n"))?;
        Ok(self.written)
    }
}
