use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const FAILURE_MARKER: &str = "FAILED";

/// An output directory; every file in it has a single writer.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    /// Creates the directory and clears a stale failure marker.
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        let marker = dir.join(FAILURE_MARKER);
        if marker.exists() {
            fs::remove_file(&marker)?;
        }
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let mut f = fs::File::create(self.path(name))?;
        f.write_all(contents.as_bytes())?;
        Ok(())
    }

    pub fn mark_failed(&self, reason: &str) -> std::io::Result<()> {
        fs::write(self.path(FAILURE_MARKER), format!("{reason}\n"))
    }
}

/// Row-oriented CSV text with a fixed header.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Shortest round-trip representation, so identical runs give identical files.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Quotes a free-text cell when it would break the row.
pub fn text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}
