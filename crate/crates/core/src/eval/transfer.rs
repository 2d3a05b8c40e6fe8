//! Train on one style, test on the other, over several seeds.

use serde::{Deserialize, Serialize};

use super::{evaluate, mean_std, Metrics, MetricsSummary};
use crate::config::Config;
use crate::data::{split_cross_style, Corpus, CrossStyleSplit, Style};
use crate::error::{Error, Result};
use crate::model::CadetModel;
use crate::train::{LossName, TrainOutcome, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_macro_f1: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source_style: Style,
    pub target_style: Style,
    pub disabled: Vec<LossName>,
    pub runs: Vec<RunResult>,
    pub mean: MetricsSummary,
    pub stdev: MetricsSummary,
}

pub struct TransferRun {
    pub outcome: TrainOutcome,
    pub split: CrossStyleSplit,
    pub metrics: Metrics,
}

/// One seeded run. The vocabulary covers the whole corpus, as a pretrained
/// tokenizer would.
pub fn transfer_run(config: &Config, corpus: &Corpus, source: Style, seed: u64) -> Result<TransferRun> {
    let mut config = config.clone();
    config.seed = seed;
    let split = split_cross_style(corpus, source, config.train.val_fraction, seed)?;
    if split.val.is_empty() {
        return Err(Error::invalid("validation split is empty; raise train.val_fraction"));
    }
    let model = CadetModel::for_corpora(&config, &[corpus])?;
    let val = &split.val;
    let outcome = Trainer::new(model)?.fit(&split.train, |m| Ok(evaluate(m, val)?.macro_f1))?;
    let metrics = evaluate(&outcome.model, &split.test)?;
    Ok(TransferRun { outcome, split, metrics })
}

/// `runs` seeded runs starting at `config.seed`.
pub fn run_transfer(config: &Config, corpus: &Corpus, source: Style, runs: usize) -> Result<TransferReport> {
    if runs == 0 {
        return Err(Error::invalid("runs must be positive"));
    }
    let mut results = Vec::with_capacity(runs);
    for i in 0..runs {
        let seed = config.seed.wrapping_add(i as u64);
        let run = transfer_run(config, corpus, source, seed)?;
        log::info!("run {i} (seed {seed}): test macro-F1 {:.4}", run.metrics.macro_f1);
        results.push(RunResult {
            seed,
            metrics: run.metrics,
            best_epoch: run.outcome.best_epoch,
            epochs_run: run.outcome.epochs_run,
            best_val_macro_f1: run.outcome.best_val_macro_f1,
            train_size: run.split.train.len(),
            val_size: run.split.val.len(),
            test_size: run.split.test.len(),
        });
    }
    let metrics: Vec<Metrics> = results.iter().map(|r| r.metrics).collect();
    let (mean, stdev) = mean_std(&metrics);
    Ok(TransferReport {
        source_style: source,
        target_style: source.opposite(),
        disabled: config.train.disabled.clone(),
        runs: results,
        mean,
        stdev,
    })
}
