//! CSV helpers. Numbers are written with the shortest representation that
//! parses back to the same `f64`.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub fn num(v: f64) -> String {
    if v == 0.0 {
        return "0.0".into();
    }
    format!("{v:?}")
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

/// Two-column `key,value` table.
pub fn write_kv(path: &Path, rows: &[(String, f64)]) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k.as_str(), &num(*v)])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    let mut r = csv::Reader::from_reader(File::open(path).map_err(|e| CliError::io(path, e))?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec[1]
            .parse::<f64>()
            .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        out.push((rec[0].to_string(), v));
    }
    Ok(out)
}

/// Numeric table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| num(v)))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_reader(File::open(path).map_err(|e| CliError::io(path, e))?);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn lookup(rows: &[(String, f64)], key: &str) -> Option<f64> {
    rows.iter().find(|(k, _)| k == key).map(|r| r.1)
}
