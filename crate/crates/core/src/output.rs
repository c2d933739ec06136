//! Output files: CSV tables, JSON summaries and one manifest per file.
//!
//! Reals are written as `{:.16e}` (17 significant digits) in both formats so
//! every value round-trips exactly.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

pub fn format_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Real(x) => format_real(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Pretty JSON whose floats carry 17 significant digits.
struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_real(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes with full-precision floats; non-finite floats become null.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| LabError::Contract(format!("json serialization: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| LabError::Contract(e.to_string()))
}

/// JSON number, or the string form for NaN and infinities.
pub fn real(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(format_real(x)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Content {
    Csv(CsvTable),
    Json(Value),
}

/// One output file before it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub content: Content,
}

impl Artifact {
    pub fn csv(file_name: &str, table: CsvTable) -> Self {
        Artifact {
            file_name: file_name.into(),
            content: Content::Csv(table),
        }
    }

    pub fn json(file_name: &str, value: Value) -> Self {
        Artifact {
            file_name: file_name.into(),
            content: Content::Json(value),
        }
    }

    pub fn render(&self) -> Result<String> {
        match &self.content {
            Content::Csv(t) => Ok(t.render()),
            Content::Json(v) => to_json_string(v),
        }
    }
}

/// Metadata written next to each output as `<file>.manifest.json`.
/// `wall_time_s` and `threads` describe the run, not the result, and are the
/// only fields allowed to differ between reproducible runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub file: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
    pub tolerances: Value,
    pub wall_time_s: f64,
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

pub fn manifest_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text.as_bytes()).map_err(|e| LabError::io(path, e))
}

/// Writes each artifact and its manifest under `out_dir`, creating the
/// directory if needed. Returns the data file paths in order.
pub fn write_outputs(artifacts: &[Artifact], out_dir: &Path, manifest: &RunManifest) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    let mut written = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = out_dir.join(&a.file_name);
        write_file(&path, &a.render()?)?;
        let m = RunManifest {
            file: a.file_name.clone(),
            ..manifest.clone()
        };
        write_file(&manifest_path(&path), &to_json_string(&m)?)?;
        written.push(path);
    }
    Ok(written)
}
