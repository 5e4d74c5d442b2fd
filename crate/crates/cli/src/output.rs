//! CSV files and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
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

/// 17 significant digits, so every `f64` round-trips.
pub fn format_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone)]
pub struct Csv {
    header: Vec<String>,
    body: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Csv {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len(), "row width must match header");
        let line: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::Num(v) => format_num(v),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s.replace([',', '\n'], ";"),
            })
            .collect();
        let _ = writeln!(self.body, "{}", line.join(","));
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header.join(","), self.body)
    }
}

#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    kind: &'static str,
    command: &'a str,
    toolkit_version: &'static str,
    config_sha256: String,
    wall_time_s: f64,
}

#[derive(Debug, Serialize)]
struct FileRecord<'a> {
    kind: &'static str,
    path: &'a str,
    bytes: usize,
    sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects outputs in memory; [`OutputSet::commit`] writes them and then the manifest.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, String)>,
    started: Instant,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

impl OutputSet {
    pub fn new(dir: &Path) -> Self {
        OutputSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn add_csv(&mut self, name: impl Into<String>, csv: &Csv) {
        self.add(name, csv.render());
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file; the manifest is only written once all of them are on disk.
    pub fn commit(self, command: &str, config_text: &str) -> CliResult<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let mut written = Vec::new();
        let mut manifest = String::new();
        let run = RunRecord {
            kind: "run",
            command,
            toolkit_version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(config_text.as_bytes()),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        manifest.push_str(&serde_json::to_string(&run).expect("manifest record serializes"));
        manifest.push('\n');
        for (name, contents) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
            let rec = FileRecord {
                kind: "file",
                path: name,
                bytes: contents.len(),
                sha256: sha256_hex(contents.as_bytes()),
            };
            manifest.push_str(&serde_json::to_string(&rec).expect("manifest record serializes"));
            manifest.push('\n');
            written.push(path);
        }
        let mpath = self.dir.join(MANIFEST_NAME);
        std::fs::write(&mpath, manifest).map_err(|e| CliError::io(&mpath, e))?;
        written.push(mpath);
        Ok(written)
    }
}
