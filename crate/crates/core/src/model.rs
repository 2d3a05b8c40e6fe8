//! The assembled network: encoder, latent heads, fusion, adversaries,
//! classifiers, projections and decoder sharing one parameter store.

use candle_core::Tensor;

use crate::config::Config;
use crate::data::{Corpus, PostRecord};
use crate::disentangle::{AdversaryHeads, ClassifierHeads, FusionHeads, OrthoProjections};
use crate::encoding::Encoder;
use crate::error::{Error, Result};
use crate::latent::{LatentBundle, LatentHeads, Sampling};
use crate::nn::ParamStore;
use crate::reconstruct::{ReconProjections, ToyDecoder};
use crate::text::{TokenBatch, TokenSequence, Vocab};

/// Parameter groups trained with the transformer learning rate.
pub const TRANSFORMER_GROUPS: [&str; 2] = ["encoder", "decoder"];

pub struct CadetModel {
    pub config: Config,
    pub vocab: Vocab,
    pub target_names: Vec<String>,
    /// Epoch whose temperature inference uses.
    pub epoch: usize,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub latent: LatentHeads,
    pub fusion: FusionHeads,
    pub adversaries: AdversaryHeads,
    pub classifiers: ClassifierHeads,
    pub ortho: OrthoProjections,
    pub recon: ReconProjections,
    pub decoder: ToyDecoder,
}

impl CadetModel {
    /// Builds a freshly initialised model, loading pretrained encoder or
    /// decoder weights when the config names them.
    pub fn new(config: &Config, vocab: Vocab, target_names: Vec<String>) -> Result<Self> {
        config.validate()?;
        let n_targets = config.latent.n_targets.unwrap_or(target_names.len()).max(1);
        if n_targets < target_names.len() {
            return Err(Error::Config(format!(
                "latent.n_targets = {n_targets} but the corpus has {} target groups",
                target_names.len()
            )));
        }
        let mut params = ParamStore::new(config.dtype(), config.device(), config.seed);
        let v = vocab.len();
        let encoder = Encoder::new(&mut params.scope("encoder"), v, &config.encoder)?;
        let latent = LatentHeads::new(&mut params.scope("latent"), config.encoder.width, config, n_targets)?;
        let fusion = FusionHeads::new(&mut params.scope("fusion"), config, n_targets)?;
        let adversaries = AdversaryHeads::new(&mut params.scope("adversary"), config, n_targets)?;
        let classifiers = ClassifierHeads::new(&mut params.scope("classifier"), config, n_targets)?;
        let ortho = OrthoProjections::new(&mut params.scope("ortho"), config, n_targets)?;
        let recon = ReconProjections::new(&mut params.scope("recon"), config, n_targets)?;
        let decoder = ToyDecoder::new(&mut params.scope("decoder"), v, &config.decoder)?;
        Encoder::load_pretrained(&params, &config.encoder)?;
        ToyDecoder::load_pretrained(&params, &config.decoder)?;
        Ok(Self {
            config: config.clone(),
            vocab,
            target_names,
            epoch: 0,
            params,
            encoder,
            latent,
            fusion,
            adversaries,
            classifiers,
            ortho,
            recon,
            decoder,
        })
    }

    /// Model with a vocabulary built from `corpora` and their merged target
    /// names.
    pub fn for_corpora(config: &Config, corpora: &[&Corpus]) -> Result<Self> {
        let vocab = Vocab::build(corpora.iter().flat_map(|c| c.records().iter().map(|r| r.text.as_str())));
        let names = Corpus::merged_target_names(corpora.iter().copied());
        Self::new(config, vocab, names)
    }

    pub fn n_targets(&self) -> usize {
        self.classifiers.t.out_dim()
    }

    pub fn max_len(&self) -> usize {
        self.config.encoder.max_len.min(self.config.decoder.max_len)
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        self.vocab.tokenize(text, self.max_len())
    }

    pub fn tokenize_all(&self, records: &[PostRecord]) -> Result<Vec<TokenSequence>> {
        records.iter().map(|r| self.tokenize(&r.text)).collect()
    }

    pub fn batch(&self, seqs: &[TokenSequence]) -> Result<TokenBatch> {
        TokenBatch::new(seqs, self.config.dtype(), &self.config.device())
    }

    pub fn temperature(&self, epoch: usize) -> f64 {
        crate::latent::schedule_temperature(epoch, &self.config.gumbel)
    }

    /// Gumbel temperature used in inference mode.
    pub fn inference_tau(&self) -> f64 {
        self.temperature(self.epoch)
    }

    /// Encodes, infers and fuses the latent factors of a batch.
    pub fn infer(&self, tokens: &TokenBatch, tau: f64, sampling: &mut Sampling) -> Result<LatentBundle> {
        let h = self.encoder.encode(tokens)?;
        self.infer_from_hidden(&h, tau, sampling)
    }

    /// Same as [`infer`](Self::infer) for soft token distributions.
    pub fn infer_soft(&self, distributions: &Tensor, mask: &Tensor, tau: f64, sampling: &mut Sampling) -> Result<LatentBundle> {
        let h = self.encoder.encode_soft_unchecked(distributions, mask)?;
        self.infer_from_hidden(&h, tau, sampling)
    }

    fn infer_from_hidden(&self, h: &Tensor, tau: f64, sampling: &mut Sampling) -> Result<LatentBundle> {
        let raw = self.latent.infer(h, tau, sampling)?;
        crate::disentangle::fuse(&raw, &self.fusion)
    }

    pub fn hate_logits(&self, bundle: &LatentBundle) -> Result<Tensor> {
        self.classifiers.hate_logits(&bundle.fused()?.m)
    }
}
