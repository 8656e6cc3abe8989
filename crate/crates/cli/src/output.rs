//! Output directory, artifact bookkeeping and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use dclab::fields::io::write_field;
use dclab::fields::{FieldRef, Grid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Csv,
    Json,
    Field,
    Plot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub kind: ArtifactKind,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one run: what was asked, by which build, when, and what was written.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_file: String,
    /// SHA-256 of the configuration file bytes; absent when the file could not be read.
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: String,
    /// `ok`, `config_error`, `numerical_failure` or `io_error`.
    pub status: String,
    pub error: Option<String>,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn new(command: &str, config_file: &Path) -> Self {
        Self {
            tool: "dclab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_file: config_file.display().to_string(),
            config_sha256: None,
            seed: None,
            started: now(),
            finished: String::new(),
            status: "running".into(),
            error: None,
            artifacts: Vec::new(),
        }
    }

    pub fn finish(&mut self, result: Result<(), CliError>) {
        self.finished = now();
        match result {
            Ok(()) => {
                self.status = "ok".into();
                self.error = None;
            }
            Err(e) => {
                self.status = e.status().into();
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status.as_str() {
            "ok" => 0,
            "config_error" => 2,
            "numerical_failure" => 3,
            _ => 1,
        }
    }

    pub fn csv_artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.artifacts.iter().filter(|a| a.kind == ArtifactKind::Csv)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// One CSV cell. Floats are written with 17 significant digits so that files round-trip
/// exactly and compare byte for byte.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Builds a CSV row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => {
        vec![$($crate::output::Cell::from($v)),*]
    };
}

/// The single writer of a run: every file goes through it and is recorded with its hash.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    pub fn into_artifacts(self) -> Vec<Artifact> {
        self.artifacts
    }

    fn store(&mut self, name: &str, kind: ArtifactKind, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let entry = Artifact { path: name.to_string(), kind, sha256: sha256_hex(bytes), bytes: bytes.len() as u64 };
        // Rewriting a file replaces its entry.
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(entry);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != header.len() {
                return Err(CliError::Io(format!("{name}: row {i} has {} cells for {} columns", row.len(), header.len())));
            }
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.store(name, ArtifactKind::Csv, &bytes)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.store(name, ArtifactKind::Json, text.as_bytes())
    }

    pub fn field(&mut self, name: &str, grid: &Grid, field: FieldRef) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        write_field(&mut bytes, grid, field).map_err(|e| CliError::from_lib(name, e))?;
        self.store(name, ArtifactKind::Field, &bytes)
    }

    pub fn plot(&mut self, name: &str, script: &str) -> Result<(), CliError> {
        self.store(name, ArtifactKind::Plot, script.as_bytes())
    }
}
