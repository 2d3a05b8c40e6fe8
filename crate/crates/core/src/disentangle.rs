//! Confounder fusion, gradient-reversal adversaries, factor classifiers and
//! the pairwise orthogonality penalty.

use candle_core::{Tensor, D};

use crate::config::Config;
use crate::data::Style;
use crate::error::{Error, Result};
use crate::latent::{FusedFactors, LatentBundle, STYLE_CATEGORIES};
use crate::nn::{cross_entropy_rows, grad_reverse, rms_normalize, softmax, to_vec1, Linear, Mlp, PerExample, Scope};

/// Minimum projection norm before the orthogonality loss reports collapse.
pub const COLLAPSE_NORM: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FusionHeads {
    pub m: Mlp,
    pub t: Mlp,
    pub s: Mlp,
}

impl FusionHeads {
    pub fn new(scope: &mut Scope<'_>, config: &Config, n_targets: usize) -> Result<Self> {
        let du = config.latent.dim_u;
        let floor = config.fusion.min_hidden;
        let head = |scope: &mut Scope<'_>, name: &str, dim: usize| {
            Mlp::new(&mut scope.pp(name), dim + du, dim.max(floor), dim, true)
        };
        Ok(Self {
            m: head(scope, "m", config.latent.dim_m)?,
            t: head(scope, "t", n_targets)?,
            s: head(scope, "s", STYLE_CATEGORIES)?,
        })
    }
}

fn check_width(factor: &'static str, t: &Tensor, expected: usize) -> Result<()> {
    let got = t.dim(D::Minus1)?;
    if got != expected {
        return Err(Error::DimensionMismatch { factor, expected, got });
    }
    Ok(())
}

fn fuse_one(factor: &'static str, head: &Mlp, raw: &Tensor, u: &Tensor) -> Result<Tensor> {
    let du = u.dim(D::Minus1)?;
    check_width(factor, raw, head.in_dim() - du)?;
    head.forward(&Tensor::cat(&[raw, u], D::Minus1)?)
}

/// Fills the fused slots: `z_i = act_i(F_i([z_i_raw, z_u]))`, identity for
/// `m` and softmax for `t` and `s`.
pub fn fuse(bundle: &LatentBundle, heads: &FusionHeads) -> Result<LatentBundle> {
    let u = &bundle.u.z;
    check_width("u", u, heads.m.in_dim() - heads.m.out_dim())?;
    let m = fuse_one("m", &heads.m, &bundle.m_raw.z, u)?;
    let t = softmax(&fuse_one("t", &heads.t, &bundle.t_raw.z, u)?)?;
    let s = softmax(&fuse_one("s", &heads.s, &bundle.s_raw.z, u)?)?;
    let mut out = bundle.clone();
    out.fused = Some(FusedFactors { m, t, s });
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AdversaryHeads {
    pub m: Mlp,
    pub t: Mlp,
    pub s: Mlp,
}

impl AdversaryHeads {
    pub fn new(scope: &mut Scope<'_>, config: &Config, n_targets: usize) -> Result<Self> {
        let (du, hidden) = (config.latent.dim_u, config.adv.hidden);
        Ok(Self {
            m: Mlp::new(&mut scope.pp("m"), config.latent.dim_m, hidden, du, false)?,
            t: Mlp::new(&mut scope.pp("t"), n_targets, hidden, du, false)?,
            s: Mlp::new(&mut scope.pp("s"), STYLE_CATEGORIES, hidden, du, false)?,
        })
    }
}

/// `sum_i mean_k (D_i(GRL_lambda(z_i)) - u_hat)_k^2` per example, where
/// `u_hat` is the RMS-normalised confounder mean, also behind the reversal
/// layer. Both sides are scale-free, so the encoder cannot win by inflating
/// `z_i` or `mu_u`; the per-dimension mean keeps the term independent of
/// `dim_u`.
pub fn adversarial_loss(bundle: &LatentBundle, heads: &AdversaryHeads, lambda: f64) -> Result<PerExample> {
    let f = bundle.fused()?;
    let target = rms_normalize(&grad_reverse(&bundle.u.mu, lambda)?)?;
    let mut total: Option<Tensor> = None;
    for (z, d) in [(&f.m, &heads.m), (&f.t, &heads.t), (&f.s, &heads.s)] {
        let pred = d.forward(&rms_normalize(&grad_reverse(z, lambda)?)?)?;
        let err = (pred - &target)?.sqr()?.mean(D::Minus1)?;
        total = Some(match total {
            Some(acc) => (acc + err)?,
            None => err,
        });
    }
    Ok(PerExample::new(total.expect("three adversaries")))
}

/// Initial diagonal of the target and style heads. They read simplex
/// vectors, so a random init leaves their logits nearly constant and ties
/// category `k` to no class in particular; starting from a scaled identity
/// makes category `k` of the fused factor mean class `k`.
pub const SIMPLEX_HEAD_GAIN: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct ClassifierHeads {
    pub h: Linear,
    pub t: Linear,
    pub s: Linear,
}

impl ClassifierHeads {
    pub fn new(scope: &mut Scope<'_>, config: &Config, n_targets: usize) -> Result<Self> {
        Ok(Self {
            h: Linear::new(&mut scope.pp("h"), config.latent.dim_m, 2)?,
            t: Linear::scaled_identity(&mut scope.pp("t"), n_targets, SIMPLEX_HEAD_GAIN)?,
            s: Linear::scaled_identity(&mut scope.pp("s"), STYLE_CATEGORIES, SIMPLEX_HEAD_GAIN)?,
        })
    }

    /// Hate logits. The only input is the fused motivation factor.
    pub fn hate_logits(&self, z_m: &Tensor) -> Result<Tensor> {
        self.h.forward(z_m)
    }
}

/// Supervision for one batch.
#[derive(Debug, Clone, Default)]
pub struct FactorLabels {
    pub y: Vec<u8>,
    pub t: Vec<Option<usize>>,
    pub s: Vec<Option<Style>>,
}

impl FactorLabels {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a crate::data::PostRecord>) -> Self {
        let mut labels = FactorLabels::default();
        for r in records {
            labels.y.push(r.y);
            labels.t.push(r.t);
            labels.s.push(r.s);
        }
        labels
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FactorLosses {
    /// Class-weighted hate cross-entropy.
    pub task: PerExample,
    /// Masked where the target group is unknown.
    pub target: PerExample,
    /// Masked where the style is untagged.
    pub style: PerExample,
}

fn masked_ce(logits: &Tensor, classes: &[Option<usize>]) -> Result<PerExample> {
    let ids: Vec<u32> = classes.iter().map(|c| c.unwrap_or(0) as u32).collect();
    let targets = Tensor::from_vec(ids, classes.len(), logits.device())?;
    let ce = cross_entropy_rows(logits, &targets)?;
    let mask: Vec<bool> = classes.iter().map(Option::is_some).collect();
    if mask.iter().all(|&b| b) {
        Ok(PerExample::new(ce))
    } else {
        PerExample::masked(ce, &mask)
    }
}

pub fn factor_losses(
    bundle: &LatentBundle,
    heads: &ClassifierHeads,
    labels: &FactorLabels,
    class_weights: [f64; 2],
) -> Result<FactorLosses> {
    let f = bundle.fused()?;
    let b = bundle.batch_size();
    if labels.len() != b {
        return Err(Error::DimensionMismatch {
            factor: "labels",
            expected: b,
            got: labels.len(),
        });
    }
    let n_targets = heads.t.out_dim();
    if let Some(bad) = labels.t.iter().flatten().find(|&&t| t >= n_targets) {
        return Err(Error::invalid(format!("target id {bad} outside {n_targets} target groups")));
    }
    let device = f.m.device();

    let y: Vec<u32> = labels.y.iter().map(|&y| y as u32).collect();
    let w: Vec<f64> = labels.y.iter().map(|&y| class_weights[y as usize]).collect();
    let ce = cross_entropy_rows(&heads.hate_logits(&f.m)?, &Tensor::from_vec(y, b, device)?)?;
    let task = (ce * Tensor::from_vec(w, b, device)?.to_dtype(f.m.dtype())?)?;

    let style: Vec<Option<usize>> = labels.s.iter().map(|s| s.map(Style::index)).collect();
    Ok(FactorLosses {
        task: PerExample::new(task),
        target: masked_ce(&heads.t.forward(&f.t)?, &labels.t)?,
        style: masked_ce(&heads.s.forward(&f.s)?, &style)?,
    })
}

#[derive(Debug, Clone)]
pub struct OrthoProjections {
    pub m: Linear,
    pub t: Linear,
    pub s: Linear,
    pub u: Linear,
    pub lambda_u: f64,
}

impl OrthoProjections {
    pub fn new(scope: &mut Scope<'_>, config: &Config, n_targets: usize) -> Result<Self> {
        let d = config.orth.dim;
        Ok(Self {
            m: Linear::new(&mut scope.pp("m"), config.latent.dim_m, d)?,
            t: Linear::new(&mut scope.pp("t"), n_targets, d)?,
            s: Linear::new(&mut scope.pp("s"), STYLE_CATEGORIES, d)?,
            u: Linear::new(&mut scope.pp("u"), config.latent.dim_u, d)?,
            lambda_u: config.orth.lambda_u,
        })
    }
}

/// Pairwise penalty on raw projections `[m, t, s, u]`, each `(batch, d)`.
pub fn ortho_from_projections(p: [&Tensor; 4], lambda_u: f64) -> Result<PerExample> {
    const NAMES: [&str; 4] = ["m", "t", "s", "u"];
    let mut unit = Vec::with_capacity(4);
    for (name, x) in NAMES.iter().zip(p) {
        let norm = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
        if to_vec1(&norm.flatten_all()?)?.iter().any(|&n| !(n > COLLAPSE_NORM)) {
            return Err(Error::Collapsed(name));
        }
        unit.push(x.broadcast_div(&norm)?);
    }
    let o = |i: usize, j: usize| -> Result<Tensor> { Ok((&unit[i] * &unit[j])?.sum(D::Minus1)?.sqr()?) };
    let within = ((o(0, 1)? + o(0, 2)?)? + o(1, 2)?)?;
    let with_u = ((o(0, 3)? + o(1, 3)?)? + o(2, 3)?)?;
    Ok(PerExample::new((within + (with_u * lambda_u)?)?))
}

/// Orthogonality penalty over the fused `m, t, s` and the confounder sample.
pub fn orthogonality_loss(bundle: &LatentBundle, proj: &OrthoProjections) -> Result<PerExample> {
    let f = bundle.fused()?;
    ortho_from_projections(
        [
            &proj.m.forward(&f.m)?,
            &proj.t.forward(&f.t)?,
            &proj.s.forward(&f.s)?,
            &proj.u.forward(&bundle.u.z)?,
        ],
        proj.lambda_u,
    )
}
