//! Per-slide feature tables.
//!
//! Text format, one slide per line, tab-separated:
//!
//! ```text
//! slide_id <TAB> x_1 <TAB> x_2 ... <TAB> x_d
//! ```
//!
//! Values are written in shortest round-trip form, so a table survives a
//! write/read cycle bit-exactly. `#` lines are comments.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn new(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let dim = rows.first().map(|r| r.1.len());
        for (id, v) in &rows {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateSlide(id.clone()));
            }
            if Some(v.len()) != dim {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} features", dim.unwrap_or(0)),
                    actual: format!("{} for `{id}`", v.len()),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Feature width; 0 for an empty table.
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.1.len())
    }

    pub fn get(&self, slide_id: &str) -> Option<&[f64]> {
        self.rows
            .iter()
            .find(|(id, _)| id == slide_id)
            .map(|(_, v)| v.as_slice())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(id, _)| id.as_str())
    }

    /// Rows restricted to `ids`, in the order given.
    pub fn select<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<FeatureTable> {
        let mut rows = Vec::new();
        for id in ids {
            let v = self
                .get(id)
                .ok_or_else(|| Error::format("feature", format!("no row for slide `{id}`")))?;
            rows.push((id.to_string(), v.to_vec()));
        }
        FeatureTable::new(rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, v) in &self.rows {
            out.push_str(id);
            for x in v {
                let _ = write!(out, "\t{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().trim();
            if id.is_empty() {
                return Err(err("empty slide_id".into()));
            }
            let values = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| err(format!("bad value `{f}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some((_, first)) = rows.first() {
                let first: &Vec<f64> = first;
                if first.len() != values.len() {
                    return Err(err(format!(
                        "expected {} values, found {}",
                        first.len(),
                        values.len()
                    )));
                }
            }
            rows.push((id.to_string(), values));
        }
        FeatureTable::new(rows)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_text())
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}
