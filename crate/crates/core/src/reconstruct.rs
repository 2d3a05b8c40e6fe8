//! Latent-to-text reconstruction through a causal decoder conditioned on the
//! summed factor projections.

use candle_core::{Tensor, D};

use crate::config::{Config, DecoderConfig, ModelKind};
use crate::error::{Error, Result};
use crate::latent::{LatentBundle, STYLE_CATEGORIES};
use crate::nn::{log_softmax, softmax, Linear, ParamStore, PerExample, Scope};
use crate::text::TokenBatch;
use crate::transformer::{causal_bias, padding_bias, Transformer};

#[derive(Debug, Clone)]
pub struct ReconProjections {
    pub m: Linear,
    pub t: Linear,
    pub s: Linear,
    pub u: Linear,
}

impl ReconProjections {
    pub fn new(scope: &mut Scope<'_>, config: &Config, n_targets: usize) -> Result<Self> {
        let w = config.decoder.width;
        Ok(Self {
            m: Linear::new(&mut scope.pp("m"), config.latent.dim_m, w)?,
            t: Linear::new(&mut scope.pp("t"), n_targets, w)?,
            s: Linear::new(&mut scope.pp("s"), STYLE_CATEGORIES, w)?,
            u: Linear::new(&mut scope.pp("u"), config.latent.dim_u, w)?,
        })
    }
}

/// `h_m + h_t + h_s + h_u`, `(batch, decoder width)`.
pub fn project_and_fuse(bundle: &LatentBundle, proj: &ReconProjections) -> Result<Tensor> {
    let f = bundle.fused()?;
    let h = (proj.m.forward(&f.m)? + proj.t.forward(&f.t)?)?;
    let h = (h + proj.s.forward(&f.s)?)?;
    Ok((h + proj.u.forward(&bundle.u.z)?)?)
}

/// Causal transformer decoder. The conditioning vector occupies position 0
/// and the shifted input tokens follow it.
#[derive(Debug, Clone)]
pub struct ToyDecoder {
    token_embedding: Tensor,
    position_embedding: Tensor,
    body: Transformer,
    out: Linear,
    width: usize,
    max_len: usize,
}

impl ToyDecoder {
    pub fn new(scope: &mut Scope<'_>, vocab_size: usize, cfg: &DecoderConfig) -> Result<Self> {
        Ok(Self {
            token_embedding: scope.normal("token_embedding", &[vocab_size, cfg.width], 0.1)?,
            position_embedding: scope.normal("position_embedding", &[cfg.max_len, cfg.width], 0.1)?,
            body: Transformer::new(&mut scope.pp("body"), cfg.width, cfg.layers, cfg.heads, cfg.ff_mult)?,
            out: Linear::new(&mut scope.pp("out"), cfg.width, vocab_size)?,
            width: cfg.width,
            max_len: cfg.max_len,
        })
    }

    pub fn load_pretrained(params: &ParamStore, cfg: &DecoderConfig) -> Result<()> {
        if cfg.kind == ModelKind::Pretrained {
            if cfg.checkpoint_id.is_empty() {
                return Err(Error::Config("decoder.checkpoint_id is required for pretrained decoders".into()));
            }
            params.load_group("decoder", std::path::Path::new(&cfg.checkpoint_id), true)?;
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embedding.dims()[0]
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Next-token logits `(batch, len - 1, vocab)` for `tokens[1..]`, given
    /// `h_hat` and the teacher-forced prefix `tokens[..len - 1]`.
    pub fn logits(&self, h_hat: &Tensor, tokens: &TokenBatch) -> Result<Tensor> {
        let l = tokens.seq_len();
        if l > self.max_len {
            return Err(Error::invalid(format!(
                "sequence length {l} exceeds decoder max_len {}",
                self.max_len
            )));
        }
        if l < 2 {
            return Err(Error::invalid("reconstruction needs at least two tokens"));
        }
        check_width(h_hat, self.width)?;
        let (b, _) = tokens.ids.dims2()?;
        let prefix = tokens.shifted_inputs()?.contiguous()?;
        let emb = self
            .token_embedding
            .index_select(&prefix.flatten_all()?, 0)?
            .reshape((b, l - 1, self.width))?;
        let x = Tensor::cat(&[&h_hat.unsqueeze(1)?, &emb], 1)?;
        let x = x.broadcast_add(&self.position_embedding.narrow(0, 0, l)?)?;
        // Keys: position 0 is always visible; token keys follow the mask.
        let key_mask = Tensor::cat(&[&tokens.mask.narrow(1, 0, 1)?.ones_like()?, &tokens.mask.narrow(1, 0, l - 1)?], 1)?;
        let bias = padding_bias(&key_mask)?.broadcast_add(&causal_bias(l, x.dtype(), x.device())?)?;
        let hidden = self.body.forward(&x, &bias)?;
        self.out.forward(&hidden.narrow(1, 1, l - 1)?)
    }
}

fn check_width(h_hat: &Tensor, width: usize) -> Result<()> {
    let got = h_hat.dim(D::Minus1)?;
    if got != width {
        return Err(Error::DimensionMismatch {
            factor: "fused hidden",
            expected: width,
            got,
        });
    }
    Ok(())
}

/// Token cross-entropy of `(batch, n, vocab)` logits against the targets of
/// `tokens`, averaged over each example's non-padding positions.
pub fn sequence_cross_entropy(logits: &Tensor, tokens: &TokenBatch) -> Result<PerExample> {
    let (targets, mask) = tokens.targets()?;
    let logp = log_softmax(logits)?;
    let picked = logp
        .gather(&targets.contiguous()?.unsqueeze(D::Minus1)?, D::Minus1)?
        .squeeze(D::Minus1)?;
    let counts: Vec<f64> = tokens.lengths.iter().map(|&n| (n.saturating_sub(1)).max(1) as f64).collect();
    let counts = Tensor::from_vec(counts, tokens.batch_size(), logits.device())?.to_dtype(logits.dtype())?;
    let total = (picked * &mask)?.sum(D::Minus1)?.neg()?;
    Ok(PerExample::new((total / counts)?))
}

/// Per-example reconstruction loss and the decoder logits.
pub fn reconstruct_loss(tokens: &TokenBatch, h_hat: &Tensor, decoder: &ToyDecoder) -> Result<(PerExample, Tensor)> {
    let logits = decoder.logits(h_hat, tokens)?;
    Ok((sequence_cross_entropy(&logits, tokens)?, logits))
}

/// Soft token distributions `(batch, len, vocab)` for the whole sequence:
/// position 0 is the one-hot start token and the rest come from the decoder.
pub fn decode_soft(decoder_logits: &Tensor, bos_one_hot: &Tensor) -> Result<Tensor> {
    Ok(Tensor::cat(&[bos_one_hot, &softmax(decoder_logits)?], 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{to_f64, to_vec1, ParamStore};
    use crate::text::Vocab;
    use candle_core::{DType, Device};

    fn setup() -> (ParamStore, ToyDecoder, Vocab) {
        let vocab = Vocab::build(["a b c d e f g"]);
        let cfg = Config::tiny();
        let mut ps = ParamStore::new(DType::F64, Device::Cpu, 5);
        let dec = ToyDecoder::new(&mut ps.scope("decoder"), vocab.len(), &cfg.decoder).unwrap();
        (ps, dec, vocab)
    }

    fn batch(vocab: &Vocab, texts: &[&str]) -> TokenBatch {
        let seqs: Vec<_> = texts.iter().map(|t| vocab.tokenize(t, 12).unwrap()).collect();
        TokenBatch::new(&seqs, DType::F64, &Device::Cpu).unwrap()
    }

    fn h(b: usize) -> Tensor {
        crate::nn::Noise::new(1).normal(&[b, 8], DType::F64, &Device::Cpu).unwrap()
    }

    #[test]
    fn uniform_output_costs_log_vocab() {
        let (ps, dec, vocab) = setup();
        for name in ["decoder.out.weight", "decoder.out.bias"] {
            let v = ps.get(name).unwrap();
            v.set(&v.as_tensor().zeros_like().unwrap()).unwrap();
        }
        let b = batch(&vocab, &["a b c", "d e"]);
        let (loss, _) = reconstruct_loss(&b, &h(2), &dec).unwrap();
        for v in to_vec1(&loss.values).unwrap() {
            assert!((v - (vocab.len() as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_decoder_costs_nothing() {
        let (_, _, vocab) = setup();
        let b = batch(&vocab, &["a b c"]);
        let (targets, _) = b.targets().unwrap();
        let ids = targets.to_vec2::<u32>().unwrap();
        let v = vocab.len();
        let mut logits = vec![0.0; ids[0].len() * v];
        for (k, &id) in ids[0].iter().enumerate() {
            logits[k * v + id as usize] = 60.0;
        }
        let logits = Tensor::from_vec(logits, (1, ids[0].len(), v), &Device::Cpu).unwrap();
        let loss = sequence_cross_entropy(&logits, &b).unwrap();
        assert!(to_f64(&loss.mean().unwrap()).unwrap() < 1e-20);
    }

    #[test]
    fn padding_leaves_the_loss_unchanged() {
        let (_, dec, vocab) = setup();
        let alone = reconstruct_loss(&batch(&vocab, &["a b"]), &h(1), &dec).unwrap().0;
        let padded = reconstruct_loss(&batch(&vocab, &["a b", "c d e f g a"]), &h(2), &dec).unwrap().0;
        let (a, p) = (to_vec1(&alone.values).unwrap(), to_vec1(&padded.values).unwrap());
        assert!((a[0] - p[0]).abs() < 1e-12);
    }

    #[test]
    fn logits_are_causal() {
        let (_, dec, vocab) = setup();
        let x = dec.logits(&h(1), &batch(&vocab, &["a b c d e"])).unwrap();
        let y = dec.logits(&h(1), &batch(&vocab, &["a b c g g"])).unwrap();
        // Targets 1..; position k sees prefix tokens 0..=k. Tokens 0..=3
        // agree (<s> a b c), so logits at positions 0..=3 must agree.
        let (x, y) = (x.to_vec3::<f64>().unwrap(), y.to_vec3::<f64>().unwrap());
        for k in 0..4 {
            for (a, b) in x[0][k].iter().zip(&y[0][k]) {
                assert!((a - b).abs() < 1e-12, "position {k}");
            }
        }
        assert_ne!(x[0][4], y[0][4]);
    }

    #[test]
    fn too_long_sequences_are_rejected() {
        let (_, dec, vocab) = setup();
        let seq = vocab.tokenize(&"a ".repeat(30), 40).unwrap();
        let b = TokenBatch::new(&[seq], DType::F64, &Device::Cpu).unwrap();
        assert!(dec.logits(&h(1), &b).is_err());
    }
}
