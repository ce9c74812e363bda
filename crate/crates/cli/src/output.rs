//! Output directory handling. Floats are written with Rust's shortest
//! round-trip formatting, so outputs are byte-stable for equal values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub type CsvWriter = csv::Writer<BufWriter<File>>;

pub fn fmt_f64(v: f64) -> String {
    v.to_string()
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// An output directory that remembers which files were written to it.
pub struct OutDir {
    path: PathBuf,
    written: Vec<String>,
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("cannot write {}: {e}", path.display()))
}

impl OutDir {
    /// Creates the directory. Failure is a usage error: the caller named a
    /// place that cannot hold outputs.
    pub fn create(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path)
            .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", path.display())))?;
        let probe = path.join(".driftlens-write-test");
        File::create(&probe)
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| CliError::Usage(format!("output directory {} is not writable: {e}", path.display())))?;
        Ok(OutDir {
            path: path.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// CSV writer for `name` with `header` already written.
    pub fn csv(&mut self, name: &str, header: &[&str]) -> Result<CsvWriter, CliError> {
        let path = self.path.join(name);
        let file = File::create(&path).map_err(|e| data_err(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(header).map_err(|e| data_err(&path, e))?;
        self.written.push(name.to_string());
        Ok(w)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| data_err(&path, e))?;
        text.push('\n');
        let mut f = File::create(&path).map_err(|e| data_err(&path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| data_err(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

pub fn row<W: Write>(w: &mut csv::Writer<W>, fields: &[String]) -> Result<(), CliError> {
    w.write_record(fields).map_err(|e| CliError::Data(format!("cannot write csv row: {e}")))
}

pub fn close<W: Write>(mut w: csv::Writer<W>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Data(format!("cannot flush csv output: {e}")))
}
