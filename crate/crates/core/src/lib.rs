//! Cross-style hate-speech classification with causally disentangled
//! latent factors.
//!
//! A post is encoded once and split into four latent factors: a Gaussian
//! confounder `u`, a Gaussian motivation `m`, and categorical target `t` and
//! style `s`. Only the motivation reaches the hate classifier. Adversaries,
//! an orthogonality penalty, reconstruction and a latent style intervention
//! keep the factors apart so the classifier carries across styles.

pub mod config;
pub mod counterfactual;
pub mod data;
pub mod disentangle;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod latent;
pub mod model;
pub mod nn;
pub mod reconstruct;
pub mod text;
pub mod train;
mod transformer;

pub use config::Config;
pub use data::{Corpus, PostRecord, Style};
pub use error::{Error, Result};
pub use model::CadetModel;
pub use train::{LossName, WeightSet};
