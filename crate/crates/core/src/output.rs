//! Deterministic artifact writers: reals are rounded to 12 significant
//! digits before formatting, so identical inputs give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal form of `x` rounded to 12 significant digits.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    let a = r.abs();
    if a != 0.0 && !(1e-5..1e15).contains(&a) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

/// Serializes a real that may be infinite or NaN: finite values as numbers,
/// the rest as the strings `"inf"`, `"-inf"` or `"nan"`.
pub fn ser_real<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&fmt_real(*x))
    }
}

/// Rounds every float in a JSON tree.
pub fn normalize_json(v: Value) -> Value {
    match v {
        Value::Number(n) => match (n.is_f64(), n.as_f64()) {
            (true, Some(x)) => serde_json::Number::from_f64(round_sig(x)).map(Value::Number).unwrap_or(Value::String(fmt_real(x))),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(normalize_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON text with rounded reals.
pub fn to_json_string(value: &impl Serialize) -> Result<String> {
    let v = normalize_json(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub bytes: u64,
}

/// Writes artifacts into one directory and remembers what it wrote.
#[derive(Debug)]
pub struct ArtifactSink {
    dir: PathBuf,
    written: Vec<ArtifactEntry>,
}

impl ArtifactSink {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.written
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut f = fs::File::create(self.dir.join(name))?;
        f.write_all(bytes)?;
        self.written.retain(|e| e.file != name);
        self.written.push(ArtifactEntry { file: name.to_string(), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let s = to_json_string(value)?;
        self.write_bytes(name, s.as_bytes())
    }

    pub fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        self.write_bytes(name, table.render().as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => fmt_real(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}
