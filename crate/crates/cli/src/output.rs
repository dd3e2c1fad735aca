//! Atomic file output and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

/// Collects the files written by one command.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let target = self.path(name);
        let mut tmp = NamedTempFile::new_in(&self.root)
            .with_context(|| format!("cannot create a temporary file in {}", self.root.display()))?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target).with_context(|| format!("cannot write {}", target.display()))?;
        self.written.push(name.to_string());
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, &text)
    }

    /// Records the resolved configuration and every output, then writes
    /// `manifest.json` last.
    pub fn finish<C: Serialize>(mut self, command: &str, config: &C, status: &str) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            status,
            config,
            outputs: self.written.clone(),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    status: &'a str,
    config: &'a C,
    outputs: Vec<String>,
}
