//! Run configuration, loaded from a nested TOML document.
//!
//! Every section has defaults matching the reference hyperparameters, so a
//! config file only needs the keys it overrides. [`Config::toy`] is the
//! CPU-scale preset used by tests and the synthetic benchmark.

use std::path::Path;

use candle_core::DType;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{LossName, WeightSet};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub dtype: Precision,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub latent: LatentConfig,
    pub gumbel: GumbelConfig,
    pub fusion: FusionConfig,
    pub orth: OrthConfig,
    pub adv: AdvConfig,
    pub cf: CfConfig,
    pub weights: WeightSet,
    pub curriculum: CurriculumConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Weights loaded from a tensor archive at `checkpoint_id`.
    Pretrained,
    /// Randomly initialised small transformer.
    Toy,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: ModelKind,
    pub checkpoint_id: String,
    pub max_len: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Toy,
            checkpoint_id: String::new(),
            max_len: 256,
            width: 64,
            layers: 2,
            heads: 4,
            ff_mult: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub kind: ModelKind,
    pub checkpoint_id: String,
    pub max_len: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Toy,
            checkpoint_id: String::new(),
            max_len: 256,
            width: 64,
            layers: 2,
            heads: 4,
            ff_mult: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LatentConfig {
    pub dim_u: usize,
    pub dim_m: usize,
    /// Target-group count; taken from the corpus when absent.
    pub n_targets: Option<usize>,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            dim_u: 256,
            dim_m: 768,
            n_targets: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GumbelConfig {
    pub tau0: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        Self {
            tau0: 0.5,
            decay: 0.05,
            floor: crate::latent::TAU_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Lower bound on the hidden width of a fusion head. The hidden layer is
    /// normally as wide as the head output, but layer-normalising a 2-wide
    /// vector leaves only its sign.
    pub min_hidden: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { min_hidden: 16 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OrthConfig {
    pub dim: usize,
    pub lambda_u: f64,
}

impl Default for OrthConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            lambda_u: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AdvConfig {
    pub hidden: usize,
}

impl Default for AdvConfig {
    fn default() -> Self {
        Self { hidden: 256 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum CfPath {
    /// Expected embeddings under the decoder's token distributions.
    #[default]
    Soft,
    /// Hard argmax tokens forward, soft gradients backward.
    StraightThrough,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CfConfig {
    pub path: CfPath,
}

/// Shape of the staged loss-weight ramps. The end points of every ramp are
/// the final weights in [`Config::weights`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub rec_start: f64,
    pub rec_ramp_epochs: usize,
    /// KL stays at zero through this epoch.
    pub kl_off_through: usize,
    /// KL reaches its final weight at this epoch.
    pub kl_full_epoch: usize,
    /// Orthogonality stays at zero through this epoch.
    pub orth_off_through: usize,
    pub adv_start: f64,
    pub grl_step: f64,
    pub grl_max: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            rec_start: 0.1,
            rec_ramp_epochs: 5,
            kl_off_through: 2,
            kl_full_epoch: 6,
            orth_off_through: 2,
            adv_start: 0.1,
            grl_step: 0.2,
            grl_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr_transformer: f64,
    pub lr_other: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub val_fraction: f64,
    /// Loss components zeroed for every epoch.
    pub disabled: Vec<LossName>,
    /// Compute disabled components for the loss report even though they do
    /// not contribute to the update.
    pub report_disabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            lr_transformer: 3e-5,
            lr_other: 2e-4,
            weight_decay: 1e-2,
            clip_norm: 1.0,
            val_fraction: 0.1,
            disabled: Vec::new(),
            report_disabled: false,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            dtype: Precision::F32,
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            latent: LatentConfig::default(),
            gumbel: GumbelConfig::default(),
            fusion: FusionConfig::default(),
            orth: OrthConfig::default(),
            adv: AdvConfig::default(),
            cf: CfConfig::default(),
            weights: WeightSet::FINAL,
            curriculum: CurriculumConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Config {
    /// Small randomly initialised stack that trains on one CPU core in
    /// seconds. The transformers start from scratch, so both parameter
    /// groups use the larger learning rate.
    pub fn toy() -> Self {
        Self {
            encoder: EncoderConfig {
                max_len: 32,
                width: 64,
                layers: 2,
                heads: 4,
                ff_mult: 2,
                ..EncoderConfig::default()
            },
            decoder: DecoderConfig {
                max_len: 32,
                width: 64,
                layers: 2,
                heads: 4,
                ff_mult: 2,
                ..DecoderConfig::default()
            },
            latent: LatentConfig {
                dim_u: 16,
                dim_m: 32,
                n_targets: None,
            },
            orth: OrthConfig {
                dim: 32,
                lambda_u: 2.0,
            },
            adv: AdvConfig { hidden: 32 },
            train: TrainConfig {
                max_epochs: 12,
                lr_transformer: 1e-3,
                lr_other: 1e-3,
                ..TrainConfig::default()
            },
            ..Config::default()
        }
    }

    /// Tiny dimensions (all at most 16) for finite-difference gradient checks.
    pub fn tiny() -> Self {
        let mut config = Config::toy();
        config.dtype = Precision::F64;
        config.encoder.width = 8;
        config.encoder.heads = 2;
        config.encoder.max_len = 12;
        config.decoder.width = 8;
        config.decoder.heads = 2;
        config.decoder.max_len = 12;
        config.latent.dim_u = 4;
        config.latent.dim_m = 6;
        config.orth.dim = 5;
        config.adv.hidden = 6;
        config.fusion.min_hidden = 4;
        config
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.encoder.width % self.encoder.heads != 0 {
            return fail("encoder.width must be divisible by encoder.heads");
        }
        if self.decoder.width % self.decoder.heads != 0 {
            return fail("decoder.width must be divisible by decoder.heads");
        }
        if self.encoder.max_len < 2 || self.decoder.max_len < 2 {
            return fail("max_len must be at least 2");
        }
        if self.orth.lambda_u <= 1.0 {
            return fail("orth.lambda_u must exceed 1");
        }
        if !(self.gumbel.tau0 > 0.0) || !(0.0..1.0).contains(&self.gumbel.decay) {
            return fail("gumbel.tau0 must be positive and gumbel.decay in [0, 1)");
        }
        if self.train.batch_size < 2 {
            return fail("train.batch_size must be at least 2");
        }
        if !(0.0..1.0).contains(&self.train.val_fraction) {
            return fail("train.val_fraction must be in [0, 1)");
        }
        if self.curriculum.kl_full_epoch <= self.curriculum.kl_off_through {
            return fail("curriculum.kl_full_epoch must come after kl_off_through");
        }
        if self.curriculum.grl_max > 2.0 || self.curriculum.grl_max < 0.0 {
            return fail("curriculum.grl_max must lie in [0, 2]");
        }
        if self.weights.iter().any(|(_, w)| !(w >= 0.0)) {
            return fail("loss weights must be non-negative");
        }
        Ok(())
    }

    pub fn device(&self) -> candle_core::Device {
        candle_core::Device::Cpu
    }

    pub fn dtype(&self) -> DType {
        self.dtype.dtype()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = Config::default();
        assert_eq!(c.encoder.max_len, 256);
        assert_eq!(c.latent.dim_u, 256);
        assert_eq!(c.latent.dim_m, 768);
        assert_eq!(c.orth.dim, 128);
        assert_eq!(c.orth.lambda_u, 2.0);
        assert_eq!(c.adv.hidden, 256);
        assert_eq!(c.gumbel.tau0, 0.5);
        assert_eq!(c.gumbel.decay, 0.05);
        assert_eq!(c.train.lr_transformer, 3e-5);
        assert_eq!(c.train.lr_other, 2e-4);
        assert_eq!(c.train.patience, 5);
        assert_eq!(c.train.max_epochs, 50);
        assert_eq!(c.cf.path, CfPath::Soft);
    }

    #[test]
    fn partial_toml_overrides_defaults() {
        let c = Config::from_toml(
            "seed = 7\n[latent]\ndim_m = 32\n[cf]\npath = \"straight_through\"\n[train]\ndisabled = [\"cf\", \"KL\"]\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.latent.dim_m, 32);
        assert_eq!(c.latent.dim_u, 256);
        assert_eq!(c.cf.path, CfPath::StraightThrough);
        assert_eq!(c.train.disabled, vec![LossName::Cf, LossName::Kl]);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::toy();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lambda() {
        assert!(Config::from_toml("[orth]\nbogus = 1\n").is_err());
        assert!(Config::from_toml("[orth]\nlambda_u = 1.0\n").is_err());
    }
}
