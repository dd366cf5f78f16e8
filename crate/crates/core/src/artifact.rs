//! Stage files: JSONL records behind a `{"meta":...}` header line, CSV behind a
//! `# {...}` comment line, and JSON documents carrying a `meta` field.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance stamped on every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct MetaLineRef<'a> {
    meta: &'a RunMeta,
}

#[derive(Deserialize)]
struct MetaLine {
    meta: RunMeta,
}

/// A JSON document with the run metadata as its first field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithMeta<T> {
    pub meta: RunMeta,
    #[serde(flatten)]
    pub body: T,
}

impl RunMeta {
    pub fn header_line(&self) -> String {
        serde_json::to_string(&MetaLineRef { meta: self }).expect("meta serializes")
    }

    pub fn csv_comment(&self) -> String {
        format!(
            "# {}",
            serde_json::to_string(self).expect("meta serializes")
        )
    }
}

fn is_meta_line(line: &str) -> bool {
    line.trim_start().starts_with("{\"meta\":")
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `meta` then one JSON line per record.
pub fn write_jsonl<T: Serialize>(path: &Path, meta: &RunMeta, records: &[T]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", meta.header_line()).map_err(io)?;
    for r in records {
        let line =
            serde_json::to_string(r).map_err(|e| Error::parse(path.display().to_string(), e))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads JSONL records, skipping blank and meta lines. Returns the first meta header
/// found, if any.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Option<RunMeta>, Vec<T>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut meta = None;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = || format!("{}:{}", path.display(), n + 1);
        if is_meta_line(&line) {
            if meta.is_none() {
                let m: MetaLine =
                    serde_json::from_str(&line).map_err(|e| Error::parse(ctx(), e))?;
                meta = Some(m.meta);
            }
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(ctx(), e))?);
    }
    Ok((meta, out))
}

/// Pretty JSON of `body` with `meta` first, newline-terminated.
pub fn write_json<T: Serialize>(path: &Path, meta: &RunMeta, body: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        meta: &'a RunMeta,
        #[serde(flatten)]
        body: &'a T,
    }
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &Doc { meta, body })
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<WithMeta<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// Opens a CSV output and writes the meta comment line.
pub fn create_csv(path: &Path, meta: &RunMeta) -> Result<BufWriter<File>> {
    let mut w = create(path)?;
    writeln!(w, "{}", meta.csv_comment()).map_err(|e| Error::io(path, e))?;
    Ok(w)
}

/// Reads a CSV file with the `#` meta comment stripped.
pub fn read_csv_body(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| [l, "\n"])
        .collect())
}
