//! Dataset manifests.
//!
//! One record per line, tab-separated:
//!
//! ```text
//! slide_id <TAB> path <TAB> label <TAB> dataset_id [<TAB> artifact_mask_path]
//! ```
//!
//! `label` is `positive` or `negative`, `dataset_id` is `internal` or
//! `external`. Lines whose first non-blank character is `#` and blank lines
//! are ignored. Relative paths are resolved against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// `+1` for positive, `-1` for negative.
    pub fn sign(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    Internal,
    External,
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetId::Internal => "internal",
            DatasetId::External => "external",
        })
    }
}

impl FromStr for DatasetId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "internal" => Ok(DatasetId::Internal),
            "external" => Ok(DatasetId::External),
            other => Err(format!("unknown dataset id `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slide_id: String,
    pub path: PathBuf,
    pub label: Label,
    pub dataset: DatasetId,
    pub artifact_mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.slide_id.as_str()) {
                return Err(Error::DuplicateSlide(e.slide_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, slide_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.slide_id == slide_id)
    }

    /// Parses manifest text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            let trimmed = line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(err(format!(
                    "expected 4 or 5 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let slide_id = fields[0].trim();
            if slide_id.is_empty() {
                return Err(err("empty slide_id".into()));
            }
            let path = fields[1].trim();
            if path.is_empty() {
                return Err(err("empty path".into()));
            }
            let label = fields[2].trim().parse::<Label>().map_err(err)?;
            let dataset = fields[3].trim().parse::<DatasetId>().map_err(err)?;
            let artifact_mask = fields
                .get(4)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(PathBuf::from);
            if !seen.insert(slide_id.to_string()) {
                return Err(Error::DuplicateSlide(slide_id.to_string()));
            }
            entries.push(ManifestEntry {
                slide_id: slide_id.to_string(),
                path: PathBuf::from(path),
                label,
                dataset,
                artifact_mask,
            });
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# slide_id\tpath\tlabel\tdataset_id\tartifact_mask_path\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}",
                e.slide_id,
                e.path.display(),
                e.label,
                e.dataset
            ));
            if let Some(m) = &e.artifact_mask {
                out.push_str(&format!("\t{}", m.display()));
            }
            out.push('\n');
        }
        out
    }

    /// Joins the manifest with another, rejecting clashing slide ids.
    pub fn concat(&self, other: &DatasetManifest) -> Result<Self> {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        Self::new(entries)
    }

    /// Rewrites relative paths as paths under `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let fix = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    path: fix(&e.path),
                    artifact_mask: e.artifact_mask.as_deref().map(fix),
                    ..e.clone()
                })
                .collect(),
        }
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    DatasetManifest::parse(&text, path)
}

/// Reads a manifest and resolves its relative paths against its directory.
pub fn read_manifest_resolved(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let m = read_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(m.resolved(base))
}

pub fn write_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, m.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, label: Label, dataset: DatasetId) -> ManifestEntry {
        ManifestEntry {
            slide_id: id.into(),
            path: format!("slides/{id}.png").into(),
            label,
            dataset,
            artifact_mask: None,
        }
    }

    #[test]
    fn empty_text_is_empty_manifest() {
        let m = DatasetManifest::parse("", Path::new("m.tsv")).unwrap();
        assert!(m.is_empty());
        let m = DatasetManifest::parse("# only a comment\n\n", Path::new("m.tsv")).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# header\na\ta.png\tpositive\tinternal\nb\tb.png\tmaybe\tinternal\n";
        match DatasetManifest::parse(text, Path::new("m.tsv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "a\ta.png\tpositive\n";
        assert!(matches!(
            DatasetManifest::parse(text, Path::new("m.tsv")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "a\ta.png\tpositive\tinternal\na\tb.png\tnegative\texternal\n";
        assert!(matches!(
            DatasetManifest::parse(text, Path::new("m.tsv")),
            Err(Error::DuplicateSlide(id)) if id == "a"
        ));
        let e = entry("x", Label::Positive, DatasetId::Internal);
        assert!(DatasetManifest::new(vec![e.clone(), e]).is_err());
    }

    #[test]
    fn full_corpus_manifest_round_trip() {
        let mut entries = Vec::new();
        for i in 0..39 {
            let label = Label::from_bool(i < 20);
            entries.push(entry(&format!("int{i:02}"), label, DatasetId::Internal));
        }
        for i in 0..25 {
            let mut e = entry(&format!("ext{i:02}"), Label::from_bool(i < 4), DatasetId::External);
            if i % 5 == 0 {
                e.artifact_mask = Some(format!("masks/ext{i:02}.png").into());
            }
            entries.push(e);
        }
        let m = DatasetManifest::new(entries).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.tsv");
        write_manifest(&m, &p).unwrap();
        let back = read_manifest(&p).unwrap();
        assert_eq!(back, m);
        let internal = back.entries.iter().filter(|e| e.dataset == DatasetId::Internal).count();
        assert_eq!((internal, back.len() - internal), (39, 25));

        let resolved = read_manifest_resolved(&p).unwrap();
        assert_eq!(resolved.entries[0].path, dir.path().join("slides/int00.png"));
    }
}
