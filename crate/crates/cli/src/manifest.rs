use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use phtrack_core::io::Report;

/// Provenance of one CLI run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub config_path: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    /// Hashes the raw config bytes; call before any computation.
    pub fn new(command: &str, config_path: &Path, config_bytes: &[u8]) -> Self {
        RunManifest {
            command: command.into(),
            scenario: String::new(),
            config_path: config_path.to_path_buf(),
            config_hash: hex::encode(Sha256::digest(config_bytes)),
            seed: 0,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
        }
    }

    pub fn report(&self) -> Report {
        let mut r = Report::new();
        r.put("command", self.command.as_str())
            .put("scenario", self.scenario.as_str())
            .put("config", self.config_path.display().to_string())
            .put("config_hash", self.config_hash.as_str())
            .put("seed", self.seed)
            .put("tool_version", self.tool_version.as_str());
        for (i, p) in self.outputs.iter().enumerate() {
            r.put(format!("output.{i}"), p.display().to_string());
        }
        r
    }

    /// Writes `<output>.manifest` next to a data file.
    pub fn write_sidecar(&self, output: &Path) -> std::io::Result<()> {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest");
        let mut r = Report::new();
        r.extend("manifest", &self.report());
        std::fs::write(PathBuf::from(name), r.render())
    }
}
