//! Text encoder: token ids (or token distributions) to the pooled
//! start-of-sequence representation.

use candle_core::{DType, Tensor, D};

use crate::config::{EncoderConfig, ModelKind};
use crate::error::{Error, Result};
use crate::nn::{to_vec2, ParamStore, Scope};
use crate::text::TokenBatch;
use crate::transformer::{padding_bias, Transformer};

/// Tolerance for rows of a token distribution to count as on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Encoder {
    token_embedding: Tensor,
    position_embedding: Tensor,
    body: Transformer,
    width: usize,
    max_len: usize,
}

impl Encoder {
    pub fn new(scope: &mut Scope<'_>, vocab_size: usize, cfg: &EncoderConfig) -> Result<Self> {
        Ok(Self {
            token_embedding: scope.normal("token_embedding", &[vocab_size, cfg.width], 0.1)?,
            position_embedding: scope.normal("position_embedding", &[cfg.max_len, cfg.width], 0.1)?,
            body: Transformer::new(&mut scope.pp("body"), cfg.width, cfg.layers, cfg.heads, cfg.ff_mult)?,
            width: cfg.width,
            max_len: cfg.max_len,
        })
    }

    /// Loads pretrained weights when the config asks for them. The archive
    /// must cover every encoder parameter and match the shared vocabulary.
    pub fn load_pretrained(params: &ParamStore, cfg: &EncoderConfig) -> Result<()> {
        if cfg.kind == ModelKind::Pretrained {
            if cfg.checkpoint_id.is_empty() {
                return Err(Error::Config("encoder.checkpoint_id is required for pretrained encoders".into()));
            }
            params.load_group("encoder", std::path::Path::new(&cfg.checkpoint_id), true)?;
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

    /// `(batch, width)` hidden state at the start-of-sequence position.
    pub fn encode(&self, tokens: &TokenBatch) -> Result<Tensor> {
        let v = self.vocab_size() as u32;
        if let Some(bad) = tokens.host_ids.iter().flatten().find(|&&id| id >= v) {
            return Err(Error::invalid(format!("token id {bad} outside vocabulary of size {v}")));
        }
        let (b, l) = tokens.ids.dims2()?;
        let emb = self
            .token_embedding
            .index_select(&tokens.ids.flatten_all()?, 0)?
            .reshape((b, l, self.width))?;
        self.encode_embedded(&emb, &tokens.mask)
    }

    /// Encodes `(batch, len, vocab)` token distributions through their
    /// expected embeddings. Every row must lie on the simplex.
    pub fn encode_soft(&self, distributions: &Tensor, mask: &Tensor) -> Result<Tensor> {
        check_simplex(distributions)?;
        self.encode_soft_unchecked(distributions, mask)
    }

    pub(crate) fn encode_soft_unchecked(&self, distributions: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (b, l, v) = distributions.dims3()?;
        if v != self.vocab_size() {
            return Err(Error::DimensionMismatch {
                factor: "token distribution",
                expected: self.vocab_size(),
                got: v,
            });
        }
        let emb = distributions
            .reshape((b * l, v))?
            .matmul(&self.token_embedding)?
            .reshape((b, l, self.width))?;
        self.encode_embedded(&emb, mask)
    }

    fn encode_embedded(&self, emb: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (_, l, _) = emb.dims3()?;
        if l > self.max_len {
            return Err(Error::invalid(format!(
                "sequence length {l} exceeds encoder max_len {}",
                self.max_len
            )));
        }
        let x = emb.broadcast_add(&self.position_embedding.narrow(0, 0, l)?)?;
        let hidden = self.body.forward(&x, &padding_bias(mask)?)?;
        Ok(hidden.narrow(1, 0, 1)?.squeeze(1)?)
    }
}

fn check_simplex(distributions: &Tensor) -> Result<()> {
    let (b, l, v) = distributions.dims3()?;
    let rows = to_vec2(&distributions.reshape((b * l, v))?)?;
    for (i, row) in rows.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&p| p < -SIMPLEX_TOL) {
            return Err(Error::invalid(format!(
                "token distribution at row {}, position {} is off the simplex (sum {sum})",
                i / l,
                i % l
            )));
        }
    }
    Ok(())
}

/// One-hot rows for a batch of ids, `(batch, len, vocab)`.
pub fn one_hot(tokens: &TokenBatch, vocab_size: usize, dtype: DType) -> Result<Tensor> {
    let (b, l) = tokens.ids.dims2()?;
    let mut v = vec![0f64; b * l * vocab_size];
    for (i, row) in tokens.host_ids.iter().enumerate() {
        for (j, &id) in row.iter().enumerate() {
            v[(i * l + j) * vocab_size + id as usize] = 1.0;
        }
    }
    Ok(Tensor::from_vec(v, (b, l, vocab_size), tokens.ids.device())?.to_dtype(dtype)?)
}

/// Hardened copy of soft token rows whose gradient is that of the soft rows.
pub fn straight_through(distributions: &Tensor) -> Result<Tensor> {
    let v = distributions.dim(D::Minus1)?;
    let idx = distributions.argmax_keepdim(D::Minus1)?;
    let classes = Tensor::arange(0u32, v as u32, distributions.device())?;
    let hard = idx.broadcast_eq(&classes)?.to_dtype(distributions.dtype())?;
    let detached = distributions.detach();
    Ok(((hard - detached)? + distributions)?)
}
