//! Retraining with loss components switched off.

use serde::{Deserialize, Serialize};

use super::{run_transfer, MetricsSummary, TransferReport};
use crate::config::Config;
use crate::data::{Corpus, Style};
use crate::error::Result;
use crate::train::LossName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub disabled: Vec<LossName>,
    pub report: TransferReport,
    /// Ablated mean minus full-model mean.
    pub delta: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: TransferReport,
    pub rows: Vec<AblationRow>,
}

fn delta(a: &MetricsSummary, full: &MetricsSummary) -> MetricsSummary {
    MetricsSummary {
        precision: a.precision - full.precision,
        recall: a.recall - full.recall,
        macro_f1: a.macro_f1 - full.macro_f1,
    }
}

/// The full model and one row per variant, all on the same seeds and splits.
pub fn run_ablation_grid(
    config: &Config,
    corpus: &Corpus,
    source: Style,
    variants: &[Vec<LossName>],
    runs: usize,
) -> Result<AblationReport> {
    let mut full_cfg = config.clone();
    full_cfg.train.disabled.clear();
    let full = run_transfer(&full_cfg, corpus, source, runs)?;
    let mut rows = Vec::with_capacity(variants.len());
    for disabled in variants {
        let report = if disabled.is_empty() {
            full.clone()
        } else {
            let mut cfg = full_cfg.clone();
            cfg.train.disabled = disabled.clone();
            run_transfer(&cfg, corpus, source, runs)?
        };
        rows.push(AblationRow {
            disabled: disabled.clone(),
            delta: delta(&report.mean, &full.mean),
            report,
        });
    }
    Ok(AblationReport { full, rows })
}

/// Full model against a single ablated variant.
pub fn run_ablation(
    config: &Config,
    corpus: &Corpus,
    source: Style,
    disabled: &[LossName],
    runs: usize,
) -> Result<AblationReport> {
    run_ablation_grid(config, corpus, source, &[disabled.to_vec()], runs)
}
