//! Artifact I/O for one stage run and the JSON manifest recording it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{CliError, Kind, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct StageRun<'a> {
    command: &'static str,
    cfg: &'a Config,
    dir: PathBuf,
    /// Artifacts are read from here; equal to `dir` except for sweep variants.
    source: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> StageRun<'a> {
    pub fn new(command: &'static str, cfg: &'a Config, dir: &Path) -> Result<Self> {
        Self::nested(command, cfg, dir, dir)
    }

    pub fn nested(command: &'static str, cfg: &'a Config, source: &Path, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::new(Kind::Io, format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            command,
            cfg,
            dir: dir.to_path_buf(),
            source: source.to_path_buf(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Reads an artifact of an earlier stage. A missing file names the stage that writes it.
    pub fn artifact(&mut self, name: &str, producer: &str) -> Result<String> {
        let path = self.source.join(name);
        if !path.is_file() {
            return Err(CliError::new(
                Kind::Dependency,
                format!(
                    "missing artifact {}; run `voltisland {producer}` first",
                    path.display()
                ),
            ));
        }
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::new(Kind::Io, format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    /// Records an input that does not live in the artifact directory.
    pub fn record_input(&mut self, label: &str, content: &[u8]) {
        self.inputs.insert(label.to_string(), sha256_hex(content));
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, content)
            .map_err(|e| CliError::new(Kind::Io, format!("cannot write {}: {e}", path.display())))?;
        self.outputs.insert(name.to_string(), sha256_hex(content.as_bytes()));
        Ok(path)
    }

    pub fn manifest(&self) -> Value {
        json!({
            "command": self.command,
            "seed": self.cfg.u64("seed").unwrap_or_default(),
            "parameters": self.cfg.parameters(),
            "inputs": self.inputs,
            "outputs": self.outputs,
        })
    }

    /// Writes `<manifest_name>` next to the outputs.
    pub fn finish(self, manifest_name: &str) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest())
            .map_err(|e| CliError::new(Kind::Io, e.to_string()))?;
        text.push('\n');
        let path = self.dir.join(manifest_name);
        fs::write(&path, text)
            .map_err(|e| CliError::new(Kind::Io, format!("cannot write {}: {e}", path.display())))
    }
}
