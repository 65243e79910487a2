//! Output directory: atomic writes, fixed-precision CSV, cached JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn hash_of<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct OutputDir {
    dir: PathBuf,
    precision: usize,
}

impl OutputDir {
    pub fn create(dir: &Path, precision: usize) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            precision,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// `x` in scientific notation with `precision` significant digits.
    pub fn num(&self, x: f64) -> String {
        format!("{:.*e}", self.precision - 1, x)
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.path(name);
        let mut tmp = NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target)
            .map_err(|e| CliError::Io(format!("{}: {}", target.display(), e.error)))?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// Numeric columns, each row formatted at the configured precision.
    pub fn write_columns(&self, name: &str, header: &[&str], columns: &[&[f64]]) -> Result<(), CliError> {
        let len = columns.first().map_or(0, |c| c.len());
        let rows: Vec<Vec<String>> = (0..len)
            .map(|i| columns.iter().map(|c| self.num(c[i])).collect())
            .collect();
        self.write_csv(name, header, &rows)
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>, CliError> {
        let path = self.path(name);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text).ok()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::Io(format!("{}: {e}", path.display()))),
        }
    }

    /// Column `index` of a numeric CSV with a header row.
    pub fn read_column(&self, name: &str, index: usize) -> Result<Vec<f64>, CliError> {
        let path = self.path(name);
        let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = rec
                .get(index)
                .ok_or_else(|| CliError::Io(format!("{}: row has no column {index}", path.display())))?;
            out.push(
                field
                    .parse()
                    .map_err(|_| CliError::Io(format!("{}: '{field}' is not a number", path.display())))?,
            );
        }
        Ok(out)
    }
}
