use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Explicit = 0,
    Implicit = 1,
}

impl Style {
    pub const ALL: [Style; 2] = [Style::Explicit, Style::Implicit];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Style> {
        match i {
            0 => Some(Style::Explicit),
            1 => Some(Style::Implicit),
            _ => None,
        }
    }

    pub fn opposite(self) -> Style {
        match self {
            Style::Explicit => Style::Implicit,
            Style::Implicit => Style::Explicit,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Style::Explicit => "explicit",
            Style::Implicit => "implicit",
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "explicit" => Ok(Style::Explicit),
            "implicit" => Ok(Style::Implicit),
            other => Err(Error::invalid(format!(
                "unknown style `{other}` (expected explicit or implicit)"
            ))),
        }
    }
}

/// One labeled post. The confounding environment is never stored here.
#[derive(Debug, Clone, PartialEq)]
pub struct PostRecord {
    pub id: String,
    pub text: String,
    /// Hate label, 0 or 1.
    pub y: u8,
    /// `None` until tagged, either by the source data or by a heuristic.
    pub s: Option<Style>,
    /// Index into the owning corpus's target names.
    pub t: Option<usize>,
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleCounts {
    pub explicit: usize,
    pub implicit: usize,
    pub untagged: usize,
}

impl StyleCounts {
    pub fn get(&self, style: Style) -> usize {
        match style {
            Style::Explicit => self.explicit,
            Style::Implicit => self.implicit,
        }
    }
}

/// An ordered, validated set of records sharing one target-group vocabulary.
/// Histograms are recomputed on construction and cannot drift.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<PostRecord>,
    target_names: Vec<String>,
    label_counts: [usize; 2],
    style_counts: StyleCounts,
}

impl Corpus {
    pub fn new(records: Vec<PostRecord>, target_names: Vec<String>) -> Result<Self> {
        let mut label_counts = [0usize; 2];
        let mut style_counts = StyleCounts::default();
        let mut ids = BTreeSet::new();
        for r in &records {
            if r.text.trim().is_empty() {
                return Err(Error::invalid(format!("record {} has empty text", r.id)));
            }
            if r.y > 1 {
                return Err(Error::invalid(format!("record {} has label {}", r.id, r.y)));
            }
            if let Some(t) = r.t {
                if t >= target_names.len() {
                    return Err(Error::invalid(format!(
                        "record {} has target id {t} but only {} target groups exist",
                        r.id,
                        target_names.len()
                    )));
                }
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate record id {}", r.id)));
            }
            label_counts[r.y as usize] += 1;
            match r.s {
                Some(Style::Explicit) => style_counts.explicit += 1,
                Some(Style::Implicit) => style_counts.implicit += 1,
                None => style_counts.untagged += 1,
            }
        }
        Ok(Self {
            records,
            target_names,
            label_counts,
            style_counts,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty corpus is valid")
    }

    pub fn records(&self) -> &[PostRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<PostRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    /// Number of target groups; at least one so that downstream categorical
    /// heads always have a category.
    pub fn target_group_count(&self) -> usize {
        self.target_names.len().max(1)
    }

    pub fn label_counts(&self) -> [usize; 2] {
        self.label_counts
    }

    pub fn style_counts(&self) -> StyleCounts {
        self.style_counts
    }

    /// A corpus over a subset of records, keeping the target vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(records, self.target_names.clone()).expect("subset of a valid corpus")
    }

    pub fn filter(&self, mut keep: impl FnMut(&PostRecord) -> bool) -> Self {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::new(records, self.target_names.clone()).expect("subset of a valid corpus")
    }

    /// Re-index targets against `names`, which must contain every target
    /// name used by this corpus.
    pub fn with_target_names(&self, names: &[String]) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if let Some(t) = r.t {
                    let name = &self.target_names[t];
                    r.t = Some(names.iter().position(|n| n == name).ok_or_else(|| {
                        Error::invalid(format!("target `{name}` missing from vocabulary"))
                    })?);
                }
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(records, names.to_vec())
    }

    /// Sorted union of the target vocabularies of several corpora.
    pub fn merged_target_names<'a>(corpora: impl IntoIterator<Item = &'a Corpus>) -> Vec<String> {
        let set: BTreeSet<&String> = corpora.into_iter().flat_map(|c| c.target_names.iter()).collect();
        set.into_iter().cloned().collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    text: String,
    label: u8,
    #[serde(default)]
    style: Option<Style>,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

/// Reads a JSONL corpus. Every malformed line is reported with its 1-based
/// line number; records without an id get `line-<n>`.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JsonRecord>(&line) {
            Ok(rec) if rec.text.trim().is_empty() => {
                errors.push((line_no, "empty text".to_string()))
            }
            Ok(rec) if rec.label > 1 => {
                errors.push((line_no, format!("label must be 0 or 1, got {}", rec.label)))
            }
            Ok(rec) => raw.push((line_no, rec)),
            Err(e) => errors.push((line_no, e.to_string())),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Malformed(errors));
    }

    let target_names: Vec<String> = raw
        .iter()
        .filter_map(|(_, r)| r.target.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let records = raw
        .into_iter()
        .map(|(line_no, r)| PostRecord {
            id: r.id.unwrap_or_else(|| format!("line-{line_no}")),
            t: r
                .target
                .as_ref()
                .map(|name| target_names.binary_search(name).expect("name collected above")),
            text: r.text,
            y: r.label,
            s: r.style,
            source: r.source,
        })
        .collect();
    Corpus::new(records, target_names)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in corpus.records() {
        let rec = JsonRecord {
            id: Some(r.id.clone()),
            text: r.text.clone(),
            label: r.y,
            style: r.s,
            target: r.t.map(|t| corpus.target_names()[t].clone()),
            source: r.source.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
