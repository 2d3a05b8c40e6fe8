//! Latent style intervention, prediction stability under it, and the
//! flip-back cycle. Counterfactual text only ever exists as soft token
//! distributions inside the training graph.

use candle_core::{DType, Tensor, D};

use crate::config::CfPath;
use crate::encoding::straight_through;
use crate::error::{Error, Result};
use crate::latent::{LatentBundle, Sampling};
use crate::model::CadetModel;
use crate::nn::{to_vec2, PerExample};
use crate::reconstruct::{decode_soft, project_and_fuse, reconstruct_loss};
use crate::text::{TokenBatch, BOS};

/// Index of the largest entry of each style row; ties go to category 0.
pub fn hardened_style(z_s: &Tensor) -> Result<Vec<usize>> {
    Ok(to_vec2(z_s)?
        .iter()
        .map(|row| if row[1] > row[0] { 1 } else { 0 })
        .collect())
}

fn one_hot_rows(indices: &[usize], like: &Tensor) -> Result<Tensor> {
    let v: Vec<f64> = indices
        .iter()
        .flat_map(|&i| if i == 0 { [1.0, 0.0] } else { [0.0, 1.0] })
        .collect();
    Ok(Tensor::from_vec(v, (indices.len(), 2), like.device())?.to_dtype(like.dtype())?)
}

/// Replaces the fused style with the one-hot opposite of its argmax. Every
/// other field is carried over untouched.
pub fn style_flip(bundle: &LatentBundle) -> Result<LatentBundle> {
    let f = bundle.fused()?;
    let (_, k) = f.s.dims2()?;
    if k != 2 {
        return Err(Error::DimensionMismatch {
            factor: "s",
            expected: 2,
            got: k,
        });
    }
    let flipped: Vec<usize> = hardened_style(&f.s)?.into_iter().map(|i| 1 - i).collect();
    let mut out = bundle.clone();
    out.fused.as_mut().expect("checked above").s = one_hot_rows(&flipped, &f.s)?;
    Ok(out)
}

/// How the counterfactual motivation is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfMode {
    /// Decode the flipped bundle, re-encode the soft tokens and re-infer.
    Reencode,
    /// Reuse the factual bundle unchanged.
    Copy,
}

/// Intermediate values of one counterfactual pass.
pub struct CounterfactualPass {
    pub flipped: LatentBundle,
    /// `(batch, len, vocab)` token distributions of the counterfactual.
    pub distributions: Option<Tensor>,
    /// Factors re-inferred from the counterfactual.
    pub reinferred: LatentBundle,
}

/// Decodes `flip(bundle)` with teacher forcing on the input prefix and
/// re-infers the latent factors from the resulting token distributions.
pub fn counterfactual_pass(
    model: &CadetModel,
    tokens: &TokenBatch,
    bundle: &LatentBundle,
    tau: f64,
    mode: CfMode,
    sampling: &mut Sampling,
) -> Result<CounterfactualPass> {
    let flipped = style_flip(bundle)?;
    if mode == CfMode::Copy {
        return Ok(CounterfactualPass {
            flipped,
            distributions: None,
            reinferred: bundle.clone(),
        });
    }
    let h_cf = project_and_fuse(&flipped, &model.recon)?;
    let logits = model.decoder.logits(&h_cf, tokens)?;
    let dist = decode_soft(&logits, &bos_rows(tokens, model.vocab.len(), logits.dtype())?)?;
    let dist = match model.config.cf.path {
        CfPath::Soft => dist,
        CfPath::StraightThrough => straight_through(&dist)?,
    };
    let reinferred = model.infer_soft(&dist, &tokens.mask, tau, sampling)?;
    Ok(CounterfactualPass {
        flipped,
        distributions: Some(dist),
        reinferred,
    })
}

fn bos_rows(tokens: &TokenBatch, vocab: usize, dtype: DType) -> Result<Tensor> {
    let b = tokens.batch_size();
    let mut v = vec![0f64; b * vocab];
    for i in 0..b {
        v[i * vocab + BOS as usize] = 1.0;
    }
    Ok(Tensor::from_vec(v, (b, 1, vocab), tokens.ids.device())?.to_dtype(dtype)?)
}

/// `||C_h(z_m) - C_h(z_m_cf)||^2` on hate logits, per example.
pub fn consistency_loss(model: &CadetModel, bundle: &LatentBundle, pass: &CounterfactualPass) -> Result<PerExample> {
    let a = model.hate_logits(bundle)?;
    let b = model.hate_logits(&pass.reinferred)?;
    Ok(PerExample::new((a - b)?.sqr()?.sum(D::Minus1)?))
}

/// Flips the re-inferred factors back, decodes them and scores the original
/// tokens.
pub fn cycle_loss(model: &CadetModel, tokens: &TokenBatch, pass: &CounterfactualPass) -> Result<PerExample> {
    let back = style_flip(&pass.reinferred)?;
    let h = project_and_fuse(&back, &model.recon)?;
    Ok(reconstruct_loss(tokens, &h, &model.decoder)?.0)
}
