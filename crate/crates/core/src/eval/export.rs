//! Inference-mode factor vectors as a tab-separated table.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::infer_records;
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::model::CadetModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    M,
    T,
    S,
    U,
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Factor::M),
            "t" => Ok(Factor::T),
            "s" => Ok(Factor::S),
            "u" => Ok(Factor::U),
            other => Err(Error::UnknownFactor(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub styles: Vec<Option<crate::data::Style>>,
    pub vectors: Vec<Vec<f64>>,
}

impl LatentTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Header `id label style v0 .. v{d-1}`, one row per record.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\tlabel\tstyle");
        for i in 0..self.width() {
            write!(out, "\tv{i}").unwrap();
        }
        out.push('\n');
        for (((id, y), s), v) in self.ids.iter().zip(&self.labels).zip(&self.styles).zip(&self.vectors) {
            write!(out, "{id}\t{y}\t{}", s.map_or("", |s| s.as_str())).unwrap();
            for x in v {
                write!(out, "\t{x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

pub fn export_latents(model: &CadetModel, corpus: &Corpus, factor: Factor) -> Result<LatentTable> {
    let inf = infer_records(model, corpus.records())?;
    let vectors = match factor {
        Factor::M => inf.m,
        Factor::T => inf.t,
        Factor::S => inf.s,
        Factor::U => inf.u,
    };
    Ok(LatentTable {
        ids: corpus.records().iter().map(|r| r.id.clone()).collect(),
        labels: corpus.records().iter().map(|r| r.y).collect(),
        styles: corpus.records().iter().map(|r| r.s).collect(),
        vectors,
    })
}
