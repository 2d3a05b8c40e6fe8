//! The epoch loop: balanced batches, nine-term loss, clipped AdamW updates in
//! two learning-rate groups, and early stopping on validation macro-F1.

use std::collections::{BTreeMap, HashMap};

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::{Deserialize, Serialize};

use super::{total_loss, CurriculumSchedule, LossName, LossReport, WeightSet};
use crate::config::Config;
use crate::counterfactual::{consistency_loss, counterfactual_pass, cycle_loss, CfMode};
use crate::data::{balanced_batches, class_weights, Corpus};
use crate::disentangle::{adversarial_loss, factor_losses, orthogonality_loss, FactorLabels};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::latent::{LatentHeads, Sampling};
use crate::model::{CadetModel, TRANSFORMER_GROUPS};
use crate::nn::{to_f64, Noise};
use crate::reconstruct::{project_and_fuse, reconstruct_loss};
use crate::text::{TokenBatch, TokenSequence};

/// Noise stream ids within a step.
const FACTUAL_PATH: u64 = 0;
const COUNTERFACTUAL_PATH: u64 = 1;

/// Schedule values in force for one step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    pub epoch: usize,
    pub step: usize,
    pub weights: WeightSet,
    pub grl: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_total: f64,
    pub mean_components: BTreeMap<LossName, f64>,
    pub weights: WeightSet,
    pub grl: f64,
    pub tau: f64,
    pub val_macro_f1: f64,
}

pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: CadetModel,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochSummary>,
    pub reports: Vec<LossReport>,
}

pub struct Trainer {
    model: CadetModel,
    schedule: CurriculumSchedule,
    transformer_opt: AdamW,
    other_opt: AdamW,
    class_weights: [f64; 2],
    cf_mode: CfMode,
    step: usize,
}

impl Trainer {
    pub fn new(model: CadetModel) -> Result<Self> {
        let cfg = &model.config.train;
        let opt = |vars, lr| {
            AdamW::new(
                vars,
                ParamsAdamW {
                    lr,
                    weight_decay: cfg.weight_decay,
                    ..ParamsAdamW::default()
                },
            )
        };
        let mut transformer_vars = Vec::new();
        let mut other_vars = Vec::new();
        for group in model.params.groups() {
            let vars = model.params.group_vars(group);
            if TRANSFORMER_GROUPS.contains(&group) {
                transformer_vars.extend(vars);
            } else {
                other_vars.extend(vars);
            }
        }
        Ok(Self {
            schedule: CurriculumSchedule::from_config(&model.config),
            transformer_opt: opt(transformer_vars, cfg.lr_transformer)?,
            other_opt: opt(other_vars, cfg.lr_other)?,
            class_weights: [1.0, 1.0],
            cf_mode: CfMode::Reencode,
            step: 0,
            model,
        })
    }

    pub fn model(&self) -> &CadetModel {
        &self.model
    }

    pub fn into_model(self) -> CadetModel {
        self.model
    }

    pub fn schedule(&self) -> &CurriculumSchedule {
        &self.schedule
    }

    pub fn set_class_weights(&mut self, w: [f64; 2]) {
        self.class_weights = w;
    }

    pub fn set_cf_mode(&mut self, mode: CfMode) {
        self.cf_mode = mode;
    }

    pub fn context(&self, epoch: usize) -> StepContext {
        StepContext {
            epoch,
            step: self.step,
            weights: self.schedule.weights(epoch),
            grl: self.schedule.grl(epoch),
            tau: self.schedule.tau(epoch),
        }
    }

    /// Scalar loss components for one batch. Components with zero weight
    /// are only computed when the config asks for them to be reported, and
    /// are then detached.
    pub fn losses(&self, tokens: &TokenBatch, labels: &FactorLabels, ctx: &StepContext) -> Result<Vec<(LossName, Tensor)>> {
        let model = &self.model;
        let seed = model.config.seed;
        let report_all = model.config.train.report_disabled;
        let want = |n: LossName| ctx.weights.get(n) != 0.0 || report_all;
        let mut out: Vec<(LossName, Tensor)> = Vec::with_capacity(9);
        let mut push = |n: LossName, t: Tensor| {
            let t = if ctx.weights.get(n) == 0.0 { t.detach() } else { t };
            out.push((n, t));
        };

        let step = ctx.step as u64;
        let mut sampling = Sampling::train(Noise::derived(seed, step, FACTUAL_PATH));
        let bundle = model.infer(tokens, ctx.tau, &mut sampling)?;

        if want(LossName::Task) || want(LossName::Target) || want(LossName::Style) {
            let f = factor_losses(&bundle, &model.classifiers, labels, self.class_weights)?;
            for (n, l) in [(LossName::Task, f.task), (LossName::Target, f.target), (LossName::Style, f.style)] {
                if want(n) {
                    push(n, l.mean()?);
                }
            }
        }
        if want(LossName::Orth) {
            push(LossName::Orth, orthogonality_loss(&bundle, &model.ortho)?.mean()?);
        }
        if want(LossName::Adv) {
            push(LossName::Adv, adversarial_loss(&bundle, &model.adversaries, ctx.grl)?.mean()?);
        }
        if want(LossName::Rec) {
            let h = project_and_fuse(&bundle, &model.recon)?;
            push(LossName::Rec, reconstruct_loss(tokens, &h, &model.decoder)?.0.mean()?);
        }
        if want(LossName::Cf) || want(LossName::Cycle) {
            let mut cf_sampling = Sampling::train(Noise::derived(seed, step, COUNTERFACTUAL_PATH));
            let pass = counterfactual_pass(model, tokens, &bundle, ctx.tau, self.cf_mode, &mut cf_sampling)?;
            if want(LossName::Cf) {
                push(LossName::Cf, consistency_loss(model, &bundle, &pass)?.mean()?);
            }
            if want(LossName::Cycle) {
                push(LossName::Cycle, cycle_loss(model, tokens, &pass)?.mean()?);
            }
        }
        if want(LossName::Kl) {
            push(LossName::Kl, LatentHeads::kl(&bundle)?.mean_all()?);
        }
        Ok(out)
    }

    /// One optimisation step on a batch.
    pub fn step(&mut self, tokens: &TokenBatch, labels: &FactorLabels, ctx: &StepContext) -> Result<LossReport> {
        let components = self.losses(tokens, labels, ctx)?;
        let (total, report) = total_loss(&components, &ctx.weights, ctx.epoch, ctx.step)?;
        if total.is_variable() || total.track_op() {
            let mut grads = total.backward()?;
            self.clip(&mut grads)?;
            self.transformer_opt.step(&grads)?;
            self.other_opt.step(&grads)?;
        }
        self.step += 1;
        Ok(report)
    }

    fn clip(&self, grads: &mut GradStore) -> Result<()> {
        let max_norm = self.model.config.train.clip_norm;
        if !(max_norm > 0.0) {
            return Ok(());
        }
        let vars: Vec<_> = self.model.params.vars().map(|(_, v)| v.clone()).collect();
        let mut sq = 0.0;
        for v in &vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                sq += to_f64(&g.sqr()?.sum_all()?)?;
            }
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient norm".into()));
        }
        if norm > max_norm {
            let scale = max_norm / norm;
            for v in &vars {
                if let Some(g) = grads.remove(v.as_tensor()) {
                    grads.insert(v.as_tensor(), (g * scale)?);
                }
            }
        }
        Ok(())
    }

    /// Runs the epoch loop. `validate` scores the current parameters after
    /// every epoch; the best-scoring parameters are restored at the end.
    pub fn fit(
        mut self,
        train: &Corpus,
        mut validate: impl FnMut(&CadetModel) -> Result<f64>,
    ) -> Result<TrainOutcome> {
        if train.is_empty() {
            return Err(Error::invalid("training corpus is empty"));
        }
        self.class_weights = class_weights(train)?;
        let cfg = self.model.config.train.clone();
        let seqs: Vec<TokenSequence> = self.model.tokenize_all(train.records())?;

        let mut history = Vec::new();
        let mut reports: Vec<LossReport> = Vec::new();
        let mut best: Option<(usize, f64, HashMap<String, Tensor>)> = None;
        let mut stale = 0;
        let mut epochs_run = 0;

        for epoch in 0..cfg.max_epochs {
            self.model.epoch = epoch;
            let first_report = reports.len();
            let batches = balanced_batches(train, cfg.batch_size, epoch_seed(self.model.config.seed, epoch))?;
            for indices in batches {
                let batch_seqs: Vec<TokenSequence> = indices.iter().map(|&i| seqs[i].clone()).collect();
                let tokens = self.model.batch(&batch_seqs)?;
                let labels = FactorLabels::from_records(indices.iter().map(|&i| &train.records()[i]));
                let ctx = self.context(epoch);
                match self.step(&tokens, &labels, &ctx) {
                    Ok(report) => reports.push(report),
                    Err(Error::NonFinite(component)) => {
                        return Err(Error::Diverged {
                            epoch,
                            step: ctx.step,
                            component,
                            last_report: reports.last().cloned().map(Box::new),
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
            epochs_run += 1;

            let f1 = validate(&self.model)?;
            let epoch_reports = &reports[first_report..];
            let summary = summarize(epoch, epoch_reports, &self.context(epoch), f1);
            log::info!(
                "epoch {epoch}: loss {:.4}, val macro-F1 {f1:.4}, grl {:.2}, tau {:.3}",
                summary.mean_total,
                summary.grl,
                summary.tau
            );
            history.push(summary);

            if best.as_ref().is_none_or(|(_, b, _)| f1 > *b) {
                best = Some((epoch, f1, self.model.params.snapshot()?));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }

        let (best_epoch, best_f1, snapshot) = best.ok_or_else(|| Error::Config("train.max_epochs must be positive".into()))?;
        self.model.params.restore(&snapshot)?;
        self.model.epoch = best_epoch;
        Ok(TrainOutcome {
            model: self.model,
            best_epoch,
            best_val_macro_f1: best_f1,
            epochs_run,
            history,
            reports,
        })
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64 + 1)
}

fn summarize(epoch: usize, reports: &[LossReport], ctx: &StepContext, val_macro_f1: f64) -> EpochSummary {
    let n = reports.len().max(1) as f64;
    let mut mean_components = BTreeMap::new();
    for r in reports {
        for (&k, &v) in &r.components {
            *mean_components.entry(k).or_insert(0.0) += v / n;
        }
    }
    EpochSummary {
        epoch,
        mean_total: reports.iter().map(|r| r.total).sum::<f64>() / n,
        mean_components,
        weights: ctx.weights,
        grl: ctx.grl,
        tau: ctx.tau,
        val_macro_f1,
    }
}

/// Trains a fresh model on `train`, early-stopping on macro-F1 over `val`.
/// The vocabulary covers both corpora.
pub fn train(config: &Config, train: &Corpus, val: &Corpus) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation corpora must be non-empty"));
    }
    let names = Corpus::merged_target_names([train, val]);
    let (train, val) = (train.with_target_names(&names)?, val.with_target_names(&names)?);
    let model = CadetModel::for_corpora(config, &[&train, &val])?;
    Trainer::new(model)?.fit(&train, |m| Ok(evaluate(m, &val)?.macro_f1))
}
