//! Run directory: versioned CSVs, TOML reports and the manifest.
//!
//! Every CSV starts with one comment line `# relloc-<schema> v<version>`
//! followed by a header row. Files are written to a temporary name and
//! renamed into place, and only plain file names are accepted, so nothing
//! lands outside the output directory.
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub struct OutDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root, artifacts: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    fn target(&self, name: &str) -> Result<PathBuf> {
        let plain = Path::new(name).file_name().is_some_and(|f| f == name) && !name.starts_with('.');
        if !plain {
            return Err(Error::Usage(format!("refusing to write `{name}`: not a plain file name")));
        }
        Ok(self.root.join(name))
    }

    fn register(&mut self, name: &str) {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_owned());
        }
    }

    /// Writes `name` atomically.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.target(name)?;
        let tmp = self.root.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        self.register(name);
        Ok(())
    }

    pub fn write_toml<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = toml::to_string(value)?;
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes a CSV of `rows` under the schema comment line.
    pub fn write_csv<R: Serialize>(
        &mut self,
        name: &str,
        schema: &str,
        rows: impl IntoIterator<Item = R>,
    ) -> Result<()> {
        let path = self.target(name)?;
        let tmp = self.root.join(format!(".{name}.tmp"));
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# relloc-{schema} v{SCHEMA_VERSION}").map_err(|e| Error::io(&tmp, e))?;
        let mut w = csv::Writer::from_writer(out);
        for row in rows {
            w.serialize(row)?;
        }
        let out = w.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?;
        out.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        self.register(name);
        Ok(())
    }

    /// Writes `manifest.toml` last, listing every artifact written so far.
    pub fn finish(mut self, mut manifest: RunManifest, started: Instant) -> Result<PathBuf> {
        manifest.artifacts = self.artifacts.clone();
        manifest.runtime_s = started.elapsed().as_secs_f64();
        self.write_toml(MANIFEST, &manifest)?;
        Ok(self.root.join(MANIFEST))
    }
}

pub const MANIFEST: &str = "manifest.toml";

/// Enough to replay a run: the command line, the resolved seed and config.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    /// Input file (scenario config or grid), if any.
    pub config: Option<String>,
    /// Base seed as a decimal string; TOML integers stop at i64.
    pub seed: String,
    pub artifacts: Vec<String>,
    /// Wall clock, s.
    pub runtime_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            args: std::env::args().skip(1).collect(),
            config: config.map(|p| p.display().to_string()),
            seed: seed.to_string(),
            artifacts: Vec::new(),
            runtime_s: 0.0,
        }
    }
}
