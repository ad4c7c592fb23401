//! Line-delimited JSON persistence. Every line carries its schema version under `v`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_problem, Problem};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct LineOut<'a, T> {
    v: u32,
    #[serde(flatten)]
    record: &'a T,
}

pub fn to_line<T: Serialize>(record: &T) -> String {
    serde_json::to_string(&LineOut { v: SCHEMA_VERSION, record }).expect("records serialize to JSON")
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed { path: path.to_path_buf(), line: i + 1, message };
        let mut value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let version = value.get("v").and_then(serde_json::Value::as_u64);
        match version {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(malformed(format!("unsupported schema version {v}"))),
            None => return Err(malformed("missing schema version `v`".into())),
        }
        if let Some(obj) = value.as_object_mut() {
            obj.remove("v");
        }
        let record: T = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, path)
}

/// Writes all records atomically: the target is replaced only after every
/// line has been written to a sibling temp file.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut body = String::new();
    for r in records {
        body.push_str(&to_line(r));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", to_line(record)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Problem>> {
    read_jsonl(path)
}

/// Validates the whole batch first; nothing is written if any problem is invalid.
pub fn write_dataset(problems: &[Problem], path: &Path) -> Result<()> {
    let mut bad = Vec::new();
    for p in problems {
        let v = validate_problem(p);
        if !v.is_empty() {
            bad.push(format!("{} [{}]", p.id, v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")));
        }
    }
    if !bad.is_empty() {
        let id = problems.iter().find(|p| !validate_problem(p).is_empty()).map(|p| p.id.clone()).unwrap_or_default();
        return Err(Error::InvalidProblem { id, violations: bad });
    }
    write_jsonl(path, problems)
}
