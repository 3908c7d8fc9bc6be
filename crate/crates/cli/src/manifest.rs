use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bimsmt::rng::derive_seed;
use bimsmt::tensor::CHECKPOINT_VERSION;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// What a command read and wrote, with enough detail to rerun it.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub checkpoint_format: u32,
    pub started: String,
    pub finished: String,
    pub root_seed: Option<u64>,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: TOOL_VERSION,
            checkpoint_format: CHECKPOINT_VERSION,
            started: now(),
            finished: String::new(),
            root_seed: None,
            seeds: BTreeMap::new(),
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn config<T: Serialize>(&mut self, cfg: &T) -> Result<()> {
        self.config = serde_json::to_value(cfg)?;
        Ok(())
    }

    /// Records the root seed and the per-component seeds split from it.
    pub fn seeds(&mut self, root: u64, components: &[&str]) {
        self.root_seed = Some(root);
        for c in components {
            self.seeds.insert(c.to_string(), derive_seed(root, c));
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn write(mut self, path: &Path) -> Result<PathBuf> {
        self.finished = now();
        let text = serde_json::to_string_pretty(&self)? + "\n";
        std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path.to_path_buf())
    }

    /// Writes `<out>.manifest.json` beside a single output file.
    pub fn write_beside(self, out: &Path) -> Result<PathBuf> {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        self.write(&out.with_file_name(name))
    }
}
