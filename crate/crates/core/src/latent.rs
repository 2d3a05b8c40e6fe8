//! Raw latent factors inferred from the pooled encoding: Gaussian confounder
//! and motivation, Gumbel-Softmax target and style.

use candle_core::{Tensor, D};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::nn::{softmax, to_f64, Linear, Mode, Noise, Scope};

/// Lowest temperature the annealing schedule reaches.
pub const TAU_FLOOR: f64 = 0.1;
/// `logvar` is clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]`.
pub const LOGVAR_CLAMP: f64 = 10.0;
/// Style is binary: explicit, implicit.
pub const STYLE_CATEGORIES: usize = 2;

/// Where reparameterisation noise comes from.
pub struct Sampling {
    mode: Mode,
    noise: Option<Noise>,
}

impl Sampling {
    pub fn train(noise: Noise) -> Self {
        Self {
            mode: Mode::Train,
            noise: Some(noise),
        }
    }

    pub fn infer() -> Self {
        Self {
            mode: Mode::Infer,
            noise: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn normal_like(&mut self, t: &Tensor) -> Result<Option<Tensor>> {
        match &mut self.noise {
            Some(n) => Ok(Some(n.normal(t.dims(), t.dtype(), t.device())?)),
            None => Ok(None),
        }
    }

    fn gumbel_like(&mut self, t: &Tensor) -> Result<Option<Tensor>> {
        match &mut self.noise {
            Some(n) => Ok(Some(n.gumbel(t.dims(), t.dtype(), t.device())?)),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianFactor {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
}

#[derive(Debug, Clone)]
pub struct CategoricalFactor {
    pub logits: Tensor,
    /// Rows on the simplex.
    pub z: Tensor,
    pub tau: f64,
}

/// Factors after confounder fusion. `t` and `s` rows are on the simplex.
#[derive(Debug, Clone)]
pub struct FusedFactors {
    pub m: Tensor,
    pub t: Tensor,
    pub s: Tensor,
}

#[derive(Debug, Clone)]
pub struct LatentBundle {
    pub u: GaussianFactor,
    pub m_raw: GaussianFactor,
    pub t_raw: CategoricalFactor,
    pub s_raw: CategoricalFactor,
    pub fused: Option<FusedFactors>,
}

impl LatentBundle {
    pub fn fused(&self) -> Result<&FusedFactors> {
        self.fused.as_ref().ok_or(Error::Unfused)
    }

    pub fn batch_size(&self) -> usize {
        self.u.z.dims()[0]
    }
}

#[derive(Debug, Clone)]
pub struct GaussianHead {
    name: &'static str,
    mu: Linear,
    logvar: Linear,
}

impl GaussianHead {
    pub fn new(scope: &mut Scope<'_>, name: &'static str, in_dim: usize, dim: usize) -> Result<Self> {
        let mut scope = scope.pp(name);
        Ok(Self {
            name,
            mu: Linear::new(&mut scope.pp("mu"), in_dim, dim)?,
            logvar: Linear::new(&mut scope.pp("logvar"), in_dim, dim)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.out_dim()
    }
}

#[derive(Debug, Clone)]
pub struct CategoricalHead {
    name: &'static str,
    logits: Linear,
}

impl CategoricalHead {
    pub fn new(scope: &mut Scope<'_>, name: &'static str, in_dim: usize, categories: usize) -> Result<Self> {
        Ok(Self {
            name,
            logits: Linear::new(&mut scope.pp(name), in_dim, categories)?,
        })
    }

    pub fn categories(&self) -> usize {
        self.logits.out_dim()
    }
}

fn ensure_finite(t: &Tensor, name: &str) -> Result<()> {
    if to_f64(&t.sum_all()?)?.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{name} head")))
    }
}

/// `mu + exp(logvar / 2) * eps`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, eps: &Tensor) -> Result<Tensor> {
    Ok((mu + ((logvar * 0.5)?.exp()? * eps)?)?)
}

pub fn infer_gaussian(h: &Tensor, head: &GaussianHead, sampling: &mut Sampling) -> Result<GaussianFactor> {
    let mu = head.mu.forward(h)?;
    let logvar = head.logvar.forward(h)?;
    ensure_finite(&mu, head.name)?;
    ensure_finite(&logvar, head.name)?;
    let logvar = logvar.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)?;
    let z = match sampling.normal_like(&mu)? {
        Some(eps) => reparameterize(&mu, &logvar, &eps)?,
        None => mu.clone(),
    };
    Ok(GaussianFactor { mu, logvar, z })
}

/// `softmax((logits + g) / tau)`, without noise when `gumbel` is `None`.
pub fn gumbel_softmax(logits: &Tensor, tau: f64, gumbel: Option<&Tensor>) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let perturbed = match gumbel {
        Some(g) => (logits + g)?,
        None => logits.clone(),
    };
    softmax(&(perturbed / tau)?)
}

pub fn infer_categorical(
    h: &Tensor,
    head: &CategoricalHead,
    tau: f64,
    sampling: &mut Sampling,
) -> Result<CategoricalFactor> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let logits = head.logits.forward(h)?;
    ensure_finite(&logits, head.name)?;
    let noise = sampling.gumbel_like(&logits)?;
    let z = gumbel_softmax(&logits, tau, noise.as_ref())?;
    Ok(CategoricalFactor { logits, z, tau })
}

/// Per-row `KL(N(mu, exp(logvar)) || N(0, I))`.
pub fn kl_gaussian(mu: &Tensor, logvar: &Tensor) -> Result<Tensor> {
    let inner = ((logvar + 1.0)? - mu.sqr()? - logvar.exp()?)?;
    Ok((inner.sum(D::Minus1)? * -0.5)?)
}

/// Per-row `KL(softmax(logits) || uniform) = log K - H`.
pub fn kl_categorical(logits: &Tensor) -> Result<Tensor> {
    let k = logits.dim(D::Minus1)? as f64;
    let logp = crate::nn::log_softmax(logits)?;
    let neg_entropy = (logp.exp()? * &logp)?.sum(D::Minus1)?;
    Ok((neg_entropy + k.ln())?)
}

/// `tau0 * (1 - rate)^epoch`, never below [`TAU_FLOOR`].
pub fn anneal_temperature(epoch: usize, tau0: f64, rate: f64) -> f64 {
    (tau0 * (1.0 - rate).powi(epoch as i32)).max(TAU_FLOOR)
}

/// [`anneal_temperature`] with the configured floor.
pub fn schedule_temperature(epoch: usize, cfg: &crate::config::GumbelConfig) -> f64 {
    (cfg.tau0 * (1.0 - cfg.decay).powi(epoch as i32)).max(cfg.floor)
}

#[derive(Debug, Clone)]
pub struct LatentHeads {
    pub u: GaussianHead,
    pub m: GaussianHead,
    pub t: CategoricalHead,
    pub s: CategoricalHead,
}

impl LatentHeads {
    pub fn new(scope: &mut Scope<'_>, in_dim: usize, config: &Config, n_targets: usize) -> Result<Self> {
        Ok(Self {
            u: GaussianHead::new(scope, "u", in_dim, config.latent.dim_u)?,
            m: GaussianHead::new(scope, "m", in_dim, config.latent.dim_m)?,
            t: CategoricalHead::new(scope, "t", in_dim, n_targets)?,
            s: CategoricalHead::new(scope, "s", in_dim, STYLE_CATEGORIES)?,
        })
    }

    /// Raw factors for a batch of pooled encodings; not yet fused.
    pub fn infer(&self, h: &Tensor, tau: f64, sampling: &mut Sampling) -> Result<LatentBundle> {
        Ok(LatentBundle {
            u: infer_gaussian(h, &self.u, sampling)?,
            m_raw: infer_gaussian(h, &self.m, sampling)?,
            t_raw: infer_categorical(h, &self.t, tau, sampling)?,
            s_raw: infer_categorical(h, &self.s, tau, sampling)?,
            fused: None,
        })
    }

    /// Summed per-row KL of all four factors.
    pub fn kl(bundle: &LatentBundle) -> Result<Tensor> {
        let kl = (kl_gaussian(&bundle.u.mu, &bundle.u.logvar)?
            + kl_gaussian(&bundle.m_raw.mu, &bundle.m_raw.logvar)?)?;
        let kl = (kl + kl_categorical(&bundle.t_raw.logits)?)?;
        Ok((kl + kl_categorical(&bundle.s_raw.logits)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{to_vec1, to_vec2, ParamStore};
    use candle_core::{DType, Device};

    fn t2(rows: &[&[f64]]) -> Tensor {
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Tensor::new(v, &Device::Cpu).unwrap()
    }

    #[test]
    fn infer_mode_returns_the_mean() {
        let mut ps = ParamStore::new(DType::F64, Device::Cpu, 1);
        let head = GaussianHead::new(&mut ps.scope("latent"), "u", 3, 5).unwrap();
        let h = t2(&[&[0.1, -0.2, 0.3]]);
        let f = infer_gaussian(&h, &head, &mut Sampling::infer()).unwrap();
        assert_eq!(to_vec2(&f.z).unwrap(), to_vec2(&f.mu).unwrap());
    }

    #[test]
    fn vanishing_variance_collapses_to_the_mean() {
        let mu = t2(&[&[0.5, -1.5]]);
        let logvar = t2(&[&[-1e4, -1e4]]);
        let eps = t2(&[&[3.0, -2.0]]);
        assert_eq!(to_vec2(&reparameterize(&mu, &logvar, &eps).unwrap()).unwrap(), to_vec2(&mu).unwrap());

        // Through a head, the clamp bounds sigma by exp(-5).
        let mut ps = ParamStore::new(DType::F64, Device::Cpu, 1);
        let head = GaussianHead::new(&mut ps.scope("latent"), "u", 1, 2).unwrap();
        ps.get("latent.u.logvar.bias").unwrap().set(&Tensor::new(&[-1e6f64, -1e6], &Device::Cpu).unwrap()).unwrap();
        let f = infer_gaussian(&t2(&[&[1.0]]), &head, &mut Sampling::train(Noise::new(0))).unwrap();
        for (z, m) in to_vec2(&f.z).unwrap()[0].iter().zip(&to_vec2(&f.mu).unwrap()[0]) {
            assert!((z - m).abs() < 0.05);
        }
    }

    #[test]
    fn non_finite_head_output_is_named() {
        let mut ps = ParamStore::new(DType::F64, Device::Cpu, 1);
        let head = GaussianHead::new(&mut ps.scope("latent"), "m", 1, 2).unwrap();
        let err = infer_gaussian(&t2(&[&[f64::NAN]]), &head, &mut Sampling::infer()).unwrap_err();
        assert!(err.to_string().contains("m head"), "{err}");
    }

    #[test]
    fn gumbel_softmax_symmetry_and_simplex() {
        let z = gumbel_softmax(&t2(&[&[0.0, 0.0]]), 1.0, None).unwrap();
        assert_eq!(to_vec2(&z).unwrap(), vec![vec![0.5, 0.5]]);
        assert!(gumbel_softmax(&t2(&[&[0.0, 0.0]]), 0.0, None).is_err());
        assert!(gumbel_softmax(&t2(&[&[0.0, 0.0]]), -1.0, None).is_err());
    }

    #[test]
    fn kl_examples() {
        let zero = to_vec1(&kl_gaussian(&t2(&[&[0.0, 0.0]]), &t2(&[&[0.0, 0.0]])).unwrap()).unwrap();
        assert_eq!(zero, vec![0.0]);
        let one = to_vec1(&kl_gaussian(&t2(&[&[1.0]]), &t2(&[&[0.0]])).unwrap()).unwrap();
        assert!((one[0] - 0.5).abs() < 1e-12);
        let wide = to_vec1(&kl_gaussian(&t2(&[&[0.0]]), &t2(&[&[4f64.ln()]])).unwrap()).unwrap();
        assert!((wide[0] - 0.5 * (3.0 - 4f64.ln())).abs() < 1e-12);

        let uniform = to_vec1(&kl_categorical(&t2(&[&[0.3, 0.3]])).unwrap()).unwrap();
        assert!(uniform[0].abs() < 1e-15);
        let four = to_vec1(&kl_categorical(&t2(&[&[1.0, 1.0, 1.0, 1.0]])).unwrap()).unwrap();
        assert!(four[0].abs() < 1e-15);
        let sharp = to_vec1(&kl_categorical(&t2(&[&[20.0, -20.0]])).unwrap()).unwrap();
        assert!((sharp[0] - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn temperature_schedule() {
        assert_eq!(anneal_temperature(0, 0.5, 0.05), 0.5);
        assert!((anneal_temperature(1, 0.5, 0.05) - 0.475).abs() < 1e-15);
        assert_eq!(anneal_temperature(200, 0.5, 0.05), TAU_FLOOR);
    }

    #[test]
    fn reparameterized_samples_match_moments() {
        let n = 10_000;
        let mu = Tensor::full(0.7f64, (n, 1), &Device::Cpu).unwrap();
        let logvar = Tensor::full(0.25f64.ln(), (n, 1), &Device::Cpu).unwrap();
        let eps = Noise::new(3).normal(&[n, 1], DType::F64, &Device::Cpu).unwrap();
        let z = to_vec1(&reparameterize(&mu, &logvar, &eps).unwrap().flatten_all().unwrap()).unwrap();
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Four standard errors.
        assert!((mean - 0.7).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "{mean}");
        assert!((var - 0.25).abs() < 4.0 * 0.25 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn gumbel_argmax_follows_softmax() {
        let n = 10_000;
        let logits = [1.0f64, 0.0, -0.5];
        let p = to_vec1(&softmax(&Tensor::new(&logits, &Device::Cpu).unwrap().unsqueeze(0).unwrap()).unwrap().squeeze(0).unwrap()).unwrap();
        let rows = Tensor::new(&logits, &Device::Cpu).unwrap().unsqueeze(0).unwrap().repeat((n, 1)).unwrap();
        let g = Noise::new(9).gumbel(&[n, 3], DType::F64, &Device::Cpu).unwrap();
        let z = to_vec2(&gumbel_softmax(&rows, 0.1, Some(&g)).unwrap()).unwrap();
        let mut counts = [0usize; 3];
        for row in &z {
            let k = (0..3).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            counts[k] += 1;
        }
        for k in 0..3 {
            assert!((counts[k] as f64 / n as f64 - p[k]).abs() < 0.03, "{counts:?} vs {p:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kl_terms_are_non_negative(
                mu in proptest::collection::vec(-5.0f64..5.0, 1..8),
                lv in proptest::collection::vec(-8.0f64..8.0, 8),
                logits in proptest::collection::vec(-30.0f64..30.0, 2..6),
            ) {
                let d = mu.len();
                let m = Tensor::from_vec(mu, (1, d), &Device::Cpu).unwrap();
                let l = Tensor::from_vec(lv[..d].to_vec(), (1, d), &Device::Cpu).unwrap();
                prop_assert!(to_vec1(&kl_gaussian(&m, &l).unwrap()).unwrap()[0] >= -1e-12);
                let k = logits.len();
                let p = Tensor::from_vec(logits, (1, k), &Device::Cpu).unwrap();
                prop_assert!(to_vec1(&kl_categorical(&p).unwrap()).unwrap()[0] >= -1e-12);
            }

            #[test]
            fn gumbel_samples_stay_on_simplex(
                logits in proptest::collection::vec(-10.0f64..10.0, 2..6),
                tau in 0.05f64..5.0,
                seed in any::<u64>(),
            ) {
                let k = logits.len();
                let p = Tensor::from_vec(logits, (1, k), &Device::Cpu).unwrap();
                let g = Noise::new(seed).gumbel(&[1, k], DType::F64, &Device::Cpu).unwrap();
                let z = to_vec2(&gumbel_softmax(&p, tau, Some(&g)).unwrap()).unwrap();
                let sum: f64 = z[0].iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-6);
                prop_assert!(z[0].iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }
}
