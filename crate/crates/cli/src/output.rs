//! Tables, atomic file output and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use peelperc::experiment::{fmt17, OutputFormat};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub enum Cell {
    Int(i128),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt17(*x),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => (*b as u8).to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(*i as i64),
            Cell::Float(x) => Value::String(fmt17(*x)),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i128)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v as i128)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map(Into::into).unwrap_or(Cell::Empty)
    }
}

pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: OutputFormat, claim: &str) -> String {
        match format {
            OutputFormat::Csv => {
                let mut out = self.columns.join(",");
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> = self
                            .columns
                            .iter()
                            .zip(row)
                            .map(|(c, v)| (c.to_string(), v.json()))
                            .collect();
                        Value::Object(obj)
                    })
                    .collect();
                let mut s = serde_json::to_string_pretty(&json!({
                    "paper_claim": claim,
                    "rows": rows,
                }))
                .expect("json rendering");
                s.push('\n');
                s
            }
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Everything a run writes: named files, a JSON summary and the
/// mathematical claim it exercises.
pub struct Artifacts {
    pub claim: &'static str,
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
}

impl Artifacts {
    pub fn single(claim: &'static str, name: String, data: String, summary: Value) -> Self {
        Artifacts {
            claim,
            files: vec![(name, data.into_bytes())],
            summary,
        }
    }
}

/// Where artifacts go: a single file, a directory, or standard output.
pub enum Destination {
    Stdout,
    File(PathBuf),
    Dir(PathBuf),
}

/// Writes data files and the manifest. A file destination gets its
/// manifest beside it as `<file>.manifest.json`; a directory holds
/// `manifest.json`. Standard output receives the data and, on stderr, the
/// summary.
pub fn emit<C: Serialize>(
    dest: &Destination,
    command: &str,
    config: &C,
    seed: Option<u64>,
    art: &Artifacts,
) -> std::io::Result<()> {
    let config_json = serde_json::to_value(config).expect("config serializes");
    let config_hash = sha256_hex(
        serde_json::to_string(&config_json)
            .expect("json")
            .as_bytes(),
    );
    let manifest = |files: Vec<(String, String)>| -> Vec<u8> {
        let files: Map<String, Value> = files
            .into_iter()
            .map(|(n, h)| (n, json!({ "sha256": h })))
            .collect();
        let mut s = serde_json::to_string_pretty(&json!({
            "command": command,
            "paper_claim": art.claim,
            "config": config_json,
            "config_sha256": config_hash,
            "seed": seed,
            "files": files,
            "summary": art.summary,
        }))
        .expect("json");
        s.push('\n');
        s.into_bytes()
    };
    match dest {
        Destination::Stdout => {
            let mut out = std::io::stdout().lock();
            for (_, data) in &art.files {
                out.write_all(data)?;
            }
            let mut summary = art.summary.clone();
            if let Value::Object(m) = &mut summary {
                m.insert("paper_claim".into(), json!(art.claim));
            }
            eprintln!("{}", serde_json::to_string(&summary).expect("json"));
            Ok(())
        }
        Destination::File(path) => {
            let (_, data) = art.files.first().expect("one data file");
            write_atomic(path, data)?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mpath = path.with_file_name(format!("{name}.manifest.json"));
            write_atomic(&mpath, &manifest(vec![(name, sha256_hex(data))]))
        }
        Destination::Dir(dir) => {
            let mut sums = Vec::new();
            for (name, data) in &art.files {
                write_atomic(&dir.join(name), data)?;
                sums.push((name.clone(), sha256_hex(data)));
            }
            write_atomic(&dir.join("manifest.json"), &manifest(sums))
        }
    }
}
