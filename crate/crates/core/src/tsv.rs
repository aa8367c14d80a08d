//! Minimal tab-separated table I/O.
//!
//! Tables carry a single header line starting with `#`. Inputs written by
//! other tools may instead use a plain header whose first field names the
//! first column; both are accepted. Later `#` lines are comments.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub header: Option<Vec<String>>,
    /// (1-based line number, fields)
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.file.clone(), line, msg)
    }
}

pub fn read_table(path: &Path, first_column: &str) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_table(&text, &path.display().to_string(), first_column))
}

pub fn parse_table(text: &str, file: &str, first_column: &str) -> Table {
    let mut header = None;
    let mut rows = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if !seen_content && header.is_none() {
                header = Some(split(rest.trim_start()));
            }
            continue;
        }
        let fields = split(line);
        if !seen_content
            && header.is_none()
            && fields
                .first()
                .is_some_and(|f| f.eq_ignore_ascii_case(first_column))
        {
            header = Some(fields);
            seen_content = true;
            continue;
        }
        seen_content = true;
        rows.push((i + 1, fields));
    }
    Table {
        file: file.to_string(),
        header,
        rows,
    }
}

fn split(line: &str) -> Vec<String> {
    line.split('\t').map(|s| s.trim().to_string()).collect()
}

/// Accumulates a TSV document in memory.
#[derive(Debug, Default, Clone)]
pub struct TsvWriter {
    buf: String,
}

impl TsvWriter {
    pub fn new(header: &[&str]) -> Self {
        let mut w = TsvWriter::default();
        w.buf.push('#');
        w.buf.push_str(&header.join("\t"));
        w.buf.push('\n');
        w
    }

    pub fn row<I, T>(&mut self, fields: I)
    where
        I: IntoIterator<Item = T>,
        T: Display,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push('\t');
            }
            first = false;
            self.buf.push_str(&f.to_string());
        }
        self.buf.push('\n');
    }

    pub fn comment(&mut self, text: &str) {
        self.buf.push('#');
        self.buf.push_str(text);
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        write_file(path, self.buf.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_f64(table: &Table, line: usize, s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| table.err(line, format!("invalid {what} `{s}`")))
}
