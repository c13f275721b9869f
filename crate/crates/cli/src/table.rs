use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// A CSV file with a fixed header; every row must match its width.
pub struct Table {
    path: PathBuf,
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(dir: &Path, name: &str, header: &[S]) -> Self {
        Self {
            path: dir.join(name),
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, fields: &[&dyn Display]) -> Result<()> {
        if fields.len() != self.header.len() {
            bail!(
                "{}: row has {} fields, header has {}",
                self.path.display(),
                fields.len(),
                self.header.len()
            );
        }
        let line: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
        self.body.push_str(&line.join(","));
        self.body.push('\n');
        Ok(())
    }

    pub fn write(self) -> Result<PathBuf> {
        let mut out = BufWriter::new(
            File::create(&self.path).with_context(|| format!("cannot create `{}`", self.path.display()))?,
        );
        writeln!(out, "{}", self.header.join(","))?;
        out.write_all(self.body.as_bytes())?;
        out.flush()
            .with_context(|| format!("cannot write `{}`", self.path.display()))?;
        Ok(self.path)
    }
}

/// Renders an optional epoch count, `never` for a run that missed the target.
pub fn epochs_field(e: Option<usize>) -> String {
    e.map_or_else(|| "never".to_string(), |e| e.to_string())
}

/// Renders a speedup, `undefined` when neither run reached the target.
pub fn speedup_field(s: Option<f64>) -> String {
    s.map_or_else(|| "undefined".to_string(), |s| s.to_string())
}
