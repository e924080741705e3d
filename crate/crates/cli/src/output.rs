//! CSV encoding, run manifests and the on-disk layout of a run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Environment variable naming the output root when the config has no
/// `output_dir`; runs then land in `<root>/<config file stem>`.
pub const OUTPUT_ROOT_ENV: &str = "W2PT_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "w2pt-output";
pub const MANIFEST: &str = "manifest.json";
/// Present while a run is in progress; left behind if it dies.
pub const SENTINEL: &str = ".incomplete";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One file of a run, relative to the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug)]
pub struct CsvTable {
    name: String,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { name: name.into(), writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn finish(self) -> OutputFile {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        OutputFile { name: self.name, bytes }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub code_version: String,
    pub command: String,
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_path: Option<PathBuf>,
    pub config: RunConfig,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputEntry>,
    pub summary: serde_json::Value,
}

pub fn code_version() -> String {
    format!("w2pt {}", env!("CARGO_PKG_VERSION"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Where a run writes: the config's `output_dir`, else
/// `$W2PT_OUTPUT_ROOT/<stem>`, else `w2pt-output/<stem>`.
pub fn resolve_output_dir(config: &RunConfig, config_path: Option<&Path>, env_root: Option<PathBuf>) -> PathBuf {
    if let Some(dir) = &config.output_dir {
        return dir.clone();
    }
    let stem = config_path
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| config.scenario.name().to_owned());
    env_root.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT)).join(stem)
}

/// A run directory guarded by the `.incomplete` sentinel.
pub struct RunDir {
    dir: PathBuf,
    started: Instant,
    started_unix: u64,
}

impl RunDir {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        fs::write(dir.join(SENTINEL), format!("run started at unix time {started_unix}\n"))
            .with_context(|| format!("writing sentinel in {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), started: Instant::now(), started_unix })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Writes the manifest, then the data files it lists, then clears the
    /// sentinel.
    pub fn finish(
        self,
        command: &str,
        config: &RunConfig,
        config_path: Option<&Path>,
        files: &[OutputFile],
        summary: serde_json::Value,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            code_version: code_version(),
            command: command.to_owned(),
            scenario: config.scenario.name().to_owned(),
            config_path: config_path.map(Path::to_path_buf),
            config: config.clone(),
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: files
                .iter()
                .map(|f| OutputEntry { file: f.name.clone(), bytes: f.bytes.len(), sha256: sha256_hex(&f.bytes) })
                .collect(),
            summary,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.dir.join(MANIFEST), text + "\n").context("writing manifest")?;
        for f in files {
            let path = self.dir.join(&f.name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, &f.bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        fs::remove_file(self.dir.join(SENTINEL)).context("removing sentinel")?;
        Ok(manifest)
    }
}
