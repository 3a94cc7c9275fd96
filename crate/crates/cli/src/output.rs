//! Output directory, artifact hashes and the run manifest.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{sha256_hex, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub id: Option<usize>,
    pub method: Option<String>,
    pub error: String,
}

pub struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    pub failures: Vec<Failure>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    seeds: Vec<u64>,
    artifacts: &'a [Artifact],
    failures: usize,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("out: creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            failures: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(content.as_bytes()),
        });
        Ok(())
    }

    pub fn fail(&mut self, id: Option<usize>, method: Option<String>, error: impl std::fmt::Display) {
        let error = format!("{error:#}");
        match id {
            Some(id) => log::error!("instance {id}: {error}"),
            None => log::error!("{error}"),
        }
        self.failures.push(Failure { id, method, error });
    }

    /// Writes `failures.jsonl`, the resolved `config.toml` and
    /// `manifest.json`. Returns whether every item succeeded.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, seeds: Vec<u64>) -> Result<bool> {
        let failures = jsonl(&self.failures)?;
        self.write("failures.jsonl", &failures)?;
        self.write("config.toml", &cfg.to_toml()?)?;
        let manifest = Manifest {
            tool: "asymshap",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: cfg.hash()?,
            config: cfg,
            seeds,
            artifacts: &self.artifacts,
            failures: self.failures.len(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(self.dir.join("manifest.json"), text)?;
        log::info!(
            "wrote {} files to {} ({} failures)",
            self.artifacts.len() + 1,
            self.dir.display(),
            self.failures.len()
        );
        Ok(self.failures.is_empty())
    }
}

pub fn jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
