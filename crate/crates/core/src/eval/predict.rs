use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{compute_metrics, Metrics};
use crate::data::{Corpus, PostRecord, Style};
use crate::error::Result;
use crate::latent::Sampling;
use crate::model::CadetModel;
use crate::nn::{softmax, to_vec2};

const INFER_BATCH: usize = 128;

/// Inference-mode factors for a list of records, one row per record.
#[derive(Debug, Clone, Default)]
pub struct Inference {
    pub hate_prob: Vec<f64>,
    pub m: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// Softmax of the supervised style and target heads.
    pub style_probs: Vec<Vec<f64>>,
    pub target_probs: Vec<Vec<f64>>,
}

impl Inference {
    pub fn predictions(&self) -> Vec<u8> {
        self.hate_prob.iter().map(|&p| (p > 0.5) as u8).collect()
    }
}

pub fn infer_records(model: &CadetModel, records: &[PostRecord]) -> Result<Inference> {
    let mut out = Inference::default();
    let tau = model.inference_tau();
    for chunk in records.chunks(INFER_BATCH) {
        let seqs = model.tokenize_all(chunk)?;
        let tokens = model.batch(&seqs)?;
        let bundle = model.infer(&tokens, tau, &mut Sampling::infer())?;
        let f = bundle.fused()?;
        let probs = to_vec2(&softmax(&model.hate_logits(&bundle)?)?)?;
        out.hate_prob.extend(probs.iter().map(|p| p[1]));
        out.m.extend(to_vec2(&f.m)?);
        out.t.extend(to_vec2(&f.t)?);
        out.s.extend(to_vec2(&f.s)?);
        out.u.extend(to_vec2(&bundle.u.z)?);
        out.style_probs.extend(to_vec2(&softmax(&model.classifiers.s.forward(&f.s)?)?)?);
        out.target_probs.extend(to_vec2(&softmax(&model.classifiers.t.forward(&f.t)?)?)?);
    }
    Ok(out)
}

/// Hate-class metrics of the model on a labelled corpus.
pub fn evaluate(model: &CadetModel, corpus: &Corpus) -> Result<Metrics> {
    let inf = infer_records(model, corpus.records())?;
    let labels: Vec<u8> = corpus.records().iter().map(|r| r.y).collect();
    compute_metrics(&inf.predictions(), &labels)
}

/// Per-factor readout of a single post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReadout {
    pub hate_prob: f64,
    pub style_probs: BTreeMap<String, f64>,
    pub target_probs: BTreeMap<String, f64>,
}

pub fn predict_with_factors(model: &CadetModel, text: &str) -> Result<FactorReadout> {
    let record = PostRecord {
        id: "input".into(),
        text: text.to_string(),
        y: 0,
        s: None,
        t: None,
        source: None,
    };
    let inf = infer_records(model, std::slice::from_ref(&record))?;
    let style_probs = [Style::Explicit, Style::Implicit]
        .iter()
        .map(|s| (s.as_str().to_string(), inf.style_probs[0][s.index()]))
        .collect();
    let target_probs = inf.target_probs[0]
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let name = model.target_names.get(i).cloned().unwrap_or_else(|| format!("target{i}"));
            (name, p)
        })
        .collect();
    Ok(FactorReadout {
        hate_prob: inf.hate_prob[0],
        style_probs,
        target_probs,
    })
}
