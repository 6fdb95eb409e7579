//! All-or-nothing output: files are written into a staging directory inside
//! the output directory and renamed into place only once every write has
//! succeeded.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use palsy_core::features::MetricCatalog;
use serde::Serialize;
use tempfile::TempDir;

use crate::config::Resolved;

pub struct Staging {
    dir: TempDir,
    out: PathBuf,
    created_out: bool,
    names: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        let created_out = !out.exists();
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let dir = tempfile::Builder::new().prefix(".palsy-staging-").tempdir_in(out)?;
        Ok(Self { dir, out: out.to_path_buf(), created_out, names: Vec::new() })
    }

    /// Staging path for `name`, for writers that need a path.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.path().join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, bytes).with_context(|| format!("writing {name}"))
    }

    /// Moves every staged file into the output directory.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::new();
        for name in &self.names {
            let target = self.out.join(name);
            std::fs::rename(self.dir.path().join(name), &target)
                .with_context(|| format!("moving {name} into {}", self.out.display()))?;
            done.push(target);
        }
        Ok(done)
    }

    /// Drops staged files, and the output directory if this run created it.
    pub fn abandon(self) {
        let (out, created) = (self.out.clone(), self.created_out);
        drop(self.dir);
        if created {
            let _ = std::fs::remove_dir(out);
        }
    }
}

/// Writes every file or none. `fill` stages the files.
pub fn write_all(out: &Path, fill: impl FnOnce(&mut Staging) -> Result<()>) -> Result<Vec<PathBuf>> {
    let mut staging = Staging::new(out)?;
    match fill(&mut staging) {
        Ok(()) => staging.commit(),
        Err(e) => {
            staging.abandon();
            Err(e)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub palsy_core: &'static str,
    pub palsy_cli: &'static str,
}

/// Embedded in every report.
#[derive(Debug, Serialize)]
pub struct Provenance<'a> {
    pub config_hash: String,
    pub seed: u64,
    pub catalog_version: String,
    pub versions: Versions,
    pub config: &'a Resolved,
}

impl<'a> Provenance<'a> {
    pub fn new(config: &'a Resolved) -> Self {
        Self {
            config_hash: config.hash(),
            seed: config.seed,
            catalog_version: MetricCatalog::builtin().version().to_string(),
            versions: Versions { palsy_core: palsy_core::VERSION, palsy_cli: env!("CARGO_PKG_VERSION") },
            config,
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    provenance: Provenance<'a>,
    #[serde(flatten)]
    body: T,
}

pub fn report_json<T: Serialize>(config: &Resolved, body: T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Report { provenance: Provenance::new(config), body })?;
    s.push('\n');
    Ok(s)
}
