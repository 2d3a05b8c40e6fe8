//! Checkpoint directories: `manifest.json` plus one tensor archive per
//! parameter group, and optionally `metrics.jsonl` with the loss reports.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochSummary, LossReport};
use crate::config::{Config, ModelKind};
use crate::error::{Error, Result};
use crate::model::CadetModel;
use crate::text::Vocab;

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Config,
    pub vocab: Vocab,
    pub target_names: Vec<String>,
    pub epoch: usize,
    pub best_val_macro_f1: Option<f64>,
    /// Seed and optimisation steps taken; noise streams are a pure function
    /// of both.
    pub rng_seed: u64,
    pub rng_step: usize,
    pub groups: Vec<String>,
    #[serde(default)]
    pub history: Vec<EpochSummary>,
}

pub fn save_checkpoint(
    dir: &Path,
    model: &CadetModel,
    best_val_macro_f1: Option<f64>,
    steps: usize,
    history: &[EpochSummary],
    reports: &[LossReport],
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let groups: Vec<String> = model.params.groups().into_iter().map(str::to_string).collect();
    for g in &groups {
        model.params.save_group(g, &dir.join(format!("{g}.safetensors")))?;
    }
    let manifest = Manifest {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        target_names: model.target_names.clone(),
        epoch: model.epoch,
        best_val_macro_f1,
        rng_seed: model.config.seed,
        rng_step: steps,
        groups,
        history: history.to_vec(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(METRICS);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Rebuilds the model stored in `dir`.
pub fn load_checkpoint(dir: &Path) -> Result<(CadetModel, Manifest)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    // The archives already hold every weight, pretrained or not.
    let mut config = manifest.config.clone();
    config.encoder.kind = ModelKind::Toy;
    config.decoder.kind = ModelKind::Toy;
    let mut model = CadetModel::new(&config, manifest.vocab.clone(), manifest.target_names.clone())?;
    model.config = manifest.config.clone();
    for g in &manifest.groups {
        model.params.load_group(g, &dir.join(format!("{g}.safetensors")), true)?;
    }
    model.epoch = manifest.epoch;
    Ok((model, manifest))
}

pub fn read_metrics(dir: &Path) -> Result<Vec<LossReport>> {
    let path = dir.join(METRICS);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
