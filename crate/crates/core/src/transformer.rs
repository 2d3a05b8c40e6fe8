//! Pre-norm transformer blocks shared by the toy encoder and decoder.

use candle_core::{DType, Device, Tensor};

use crate::error::Result;
use crate::nn::{softmax, LayerNorm, Linear, Scope};

/// Additive bias that removes attention to masked positions.
const MASKED: f64 = -1e9;

#[derive(Debug, Clone)]
struct SelfAttention {
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    heads: usize,
}

impl SelfAttention {
    fn new(scope: &mut Scope<'_>, width: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            query: Linear::new(&mut scope.pp("query"), width, width)?,
            key: Linear::new(&mut scope.pp("key"), width, width)?,
            value: Linear::new(&mut scope.pp("value"), width, width)?,
            out: Linear::new(&mut scope.pp("out"), width, width)?,
            heads,
        })
    }

    /// `x`: `(batch, len, width)`; `bias`: broadcastable to
    /// `(batch, heads, len, len)`.
    fn forward(&self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (b, l, w) = x.dims3()?;
        let dh = w / self.heads;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((b, l, self.heads, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.query.forward(x)?)?;
        let k = split(self.key.forward(x)?)?;
        let v = split(self.value.forward(x)?)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? / (dh as f64).sqrt())?;
        let probs = softmax(&scores.broadcast_add(bias)?)?;
        let ctx = probs.matmul(&v)?.transpose(1, 2)?.reshape((b, l, w))?;
        self.out.forward(&ctx)
    }
}

#[derive(Debug, Clone)]
struct Block {
    norm_attn: LayerNorm,
    attn: SelfAttention,
    norm_ff: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

impl Block {
    fn new(scope: &mut Scope<'_>, width: usize, heads: usize, ff_mult: usize) -> Result<Self> {
        Ok(Self {
            norm_attn: LayerNorm::new(&mut scope.pp("norm_attn"), width)?,
            attn: SelfAttention::new(&mut scope.pp("attn"), width, heads)?,
            norm_ff: LayerNorm::new(&mut scope.pp("norm_ff"), width)?,
            ff_in: Linear::new(&mut scope.pp("ff_in"), width, width * ff_mult)?,
            ff_out: Linear::new(&mut scope.pp("ff_out"), width * ff_mult, width)?,
        })
    }

    fn forward(&self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let x = (x + self.attn.forward(&self.norm_attn.forward(x)?, bias)?)?;
        let ff = self.ff_out.forward(&self.ff_in.forward(&self.norm_ff.forward(&x)?)?.gelu()?)?;
        Ok((x + ff)?)
    }
}

#[derive(Debug, Clone)]
pub struct Transformer {
    blocks: Vec<Block>,
    final_norm: LayerNorm,
}

impl Transformer {
    pub fn new(scope: &mut Scope<'_>, width: usize, layers: usize, heads: usize, ff_mult: usize) -> Result<Self> {
        let blocks = (0..layers)
            .map(|i| Block::new(&mut scope.pp(&format!("block{i}")), width, heads, ff_mult))
            .collect::<Result<_>>()?;
        Ok(Self {
            blocks,
            final_norm: LayerNorm::new(&mut scope.pp("final_norm"), width)?,
        })
    }

    pub fn forward(&self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward(&h, bias)?;
        }
        self.final_norm.forward(&h)
    }
}

/// `(batch, 1, 1, len)` bias hiding padded keys.
pub fn padding_bias(mask: &Tensor) -> Result<Tensor> {
    let (b, l) = mask.dims2()?;
    let bias = ((mask.ones_like()? - mask)? * MASKED)?;
    Ok(bias.reshape((b, 1, 1, l))?)
}

/// `(1, 1, len, len)` bias hiding future positions.
pub fn causal_bias(len: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let v: Vec<f64> = (0..len)
        .flat_map(|i| (0..len).map(move |j| if j > i { MASKED } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(v, (1, 1, len, len), device)?.to_dtype(dtype)?)
}
