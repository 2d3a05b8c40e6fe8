//! Parameter storage and the small set of layers the model is built from.
//!
//! Parameters are initialised on the host from a seeded stream so that a
//! config plus seed fully determines a model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use candle_core::backend::BackendStorage;
use candle_core::{CpuStorage, CustomOp1, DType, Device, Layout, Shape, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal, Uniform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stochastic: Gaussian and Gumbel noise are drawn.
    Train,
    /// Deterministic: means and noise-free softmaxes.
    Infer,
}

/// Named trainable tensors. The first path component of a name is its
/// parameter group (`encoder`, `decoder`, `latent`, ...).
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device, seed: u64) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn scope(&mut self, name: &str) -> Scope<'_> {
        Scope {
            store: self,
            prefix: name.to_string(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn groups(&self) -> BTreeSet<&str> {
        self.vars.keys().map(|k| group_of(k)).collect()
    }

    pub fn group_vars(&self, group: &str) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(k, _)| group_of(k) == group)
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Deep copy of every parameter value.
    pub fn snapshot(&self) -> Result<HashMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?)))
            .collect()
    }

    pub fn restore(&self, snapshot: &HashMap<String, Tensor>) -> Result<()> {
        for (k, v) in &self.vars {
            let value = snapshot
                .get(k)
                .ok_or_else(|| Error::invalid(format!("snapshot lacks parameter {k}")))?;
            v.set(value)?;
        }
        Ok(())
    }

    pub fn save_group(&self, group: &str, path: &Path) -> Result<()> {
        let tensors: HashMap<String, Tensor> = self
            .vars
            .iter()
            .filter(|(k, _)| group_of(k) == group)
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&tensors, path)?;
        Ok(())
    }

    /// Overwrites parameters with the tensors stored at `path`. Every tensor
    /// in the file must match an existing parameter in name and shape; with
    /// `require_all`, every parameter of the group must be present too.
    pub fn load_group(&self, group: &str, path: &Path, require_all: bool) -> Result<()> {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "tensor archive not found"),
            ));
        }
        let tensors = candle_core::safetensors::load(path, &self.device)?;
        for (name, value) in &tensors {
            let var = self
                .vars
                .get(name)
                .ok_or_else(|| Error::invalid(format!("archive has unknown parameter {name}")))?;
            if var.shape() != value.shape() {
                return Err(Error::invalid(format!(
                    "parameter {name}: archive shape {:?} differs from model shape {:?}",
                    value.dims(),
                    var.dims()
                )));
            }
            var.set(&value.to_dtype(self.dtype)?)?;
        }
        if require_all {
            if let Some(missing) = self
                .vars
                .keys()
                .find(|k| group_of(k) == group && !tensors.contains_key(*k))
            {
                return Err(Error::invalid(format!("archive lacks parameter {missing}")));
            }
        }
        Ok(())
    }

    fn create(&mut self, name: String, dims: &[usize], values: Vec<f64>) -> Result<Tensor> {
        assert!(!self.vars.contains_key(&name), "parameter {name} created twice");
        let t = Tensor::from_vec(values, dims, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let tensor = var.as_tensor().clone();
        self.vars.insert(name, var);
        Ok(tensor)
    }
}

fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl Scope<'_> {
    pub fn pp(&mut self, name: &str) -> Scope<'_> {
        Scope {
            prefix: format!("{}.{name}", self.prefix),
            store: self.store,
        }
    }

    fn name(&self, leaf: &str) -> String {
        format!("{}.{leaf}", self.prefix)
    }

    pub fn normal(&mut self, leaf: &str, dims: &[usize], std: f64) -> Result<Tensor> {
        let n = dims.iter().product();
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.store.rng);
                z * std
            })
            .collect();
        self.store.create(self.name(leaf), dims, values)
    }

    pub fn uniform(&mut self, leaf: &str, dims: &[usize], bound: f64) -> Result<Tensor> {
        let n = dims.iter().product();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let values = (0..n).map(|_| dist.sample(&mut self.store.rng)).collect();
        self.store.create(self.name(leaf), dims, values)
    }

    pub fn constant(&mut self, leaf: &str, dims: &[usize], value: f64) -> Result<Tensor> {
        let n = dims.iter().product();
        self.store.create(self.name(leaf), dims, vec![value; n])
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(scope: &mut Scope<'_>, in_dim: usize, out_dim: usize) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Ok(Self {
            weight: scope.uniform("weight", &[out_dim, in_dim], bound)?,
            bias: scope.uniform("bias", &[out_dim], bound)?,
        })
    }

    /// Square map `gain * I` with zero bias.
    pub fn scaled_identity(scope: &mut Scope<'_>, dim: usize, gain: f64) -> Result<Self> {
        let values = (0..dim * dim).map(|i| if i % (dim + 1) == 0 { gain } else { 0.0 }).collect();
        Ok(Self {
            weight: scope.store.create(scope.name("weight"), &[dim, dim], values)?,
            bias: scope.constant("bias", &[dim], 0.0)?,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = self.weight.t()?;
        let y = match *x.dims() {
            [b, l, i] => x.reshape((b * l, i))?.matmul(&w)?.reshape((b, l, self.out_dim()))?,
            [_, _] => x.matmul(&w)?,
            _ => x.broadcast_matmul(&w)?,
        };
        Ok(y.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(scope: &mut Scope<'_>, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: scope.constant("gamma", &[dim], 1.0)?,
            beta: scope.constant("beta", &[dim], 0.0)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// Two linear layers with a GELU between them and optional layer
/// normalisation after the first.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub first: Linear,
    pub norm: Option<LayerNorm>,
    pub second: Linear,
}

impl Mlp {
    pub fn new(
        scope: &mut Scope<'_>,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        layer_norm: bool,
    ) -> Result<Self> {
        let first = Linear::new(&mut scope.pp("fc1"), in_dim, hidden)?;
        let norm = if layer_norm {
            Some(LayerNorm::new(&mut scope.pp("norm"), hidden)?)
        } else {
            None
        };
        let second = Linear::new(&mut scope.pp("fc2"), hidden, out_dim)?;
        Ok(Self { first, norm, second })
    }

    pub fn in_dim(&self) -> usize {
        self.first.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.second.out_dim()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.first.forward(x)?;
        if let Some(norm) = &self.norm {
            h = norm.forward(&h)?;
        }
        self.second.forward(&h.gelu()?)
    }
}

struct GradReverse {
    lambda: f64,
}

fn copy_contiguous<T: Copy>(src: &[T], layout: &Layout) -> candle_core::Result<Vec<T>> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(src[start..end].to_vec()),
        None => candle_core::bail!("grad-reverse: input must be contiguous"),
    }
}

impl CustomOp1 for GradReverse {
    fn name(&self) -> &'static str {
        "grad-reverse"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let out = match storage {
            CpuStorage::F64(v) => CpuStorage::F64(copy_contiguous(v, layout)?),
            CpuStorage::F32(v) => CpuStorage::F32(copy_contiguous(v, layout)?),
            other => candle_core::bail!("grad-reverse: unsupported dtype {:?}", other.dtype()),
        };
        Ok((out, layout.shape().clone()))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad_res.affine(-self.lambda, 0.0)?))
    }
}

/// Gradient-reversal layer: the identity going forward, `-lambda` times the
/// incoming gradient going backward.
pub fn grad_reverse(x: &Tensor, lambda: f64) -> Result<Tensor> {
    Ok(x.contiguous()?.apply_op1(GradReverse { lambda })?)
}

/// `x / sqrt(mean(x^2) + eps)` over the last dimension.
pub fn rms_normalize(x: &Tensor) -> Result<Tensor> {
    let ms = (x.sqr()?.mean_keepdim(D::Minus1)? + 1e-6)?;
    Ok(x.broadcast_div(&ms.sqrt()?)?)
}

pub fn softmax(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::softmax(x, D::Minus1)?)
}

pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::log_softmax(x, D::Minus1)?)
}

/// Per-row cross-entropy of `(rows, classes)` logits against class ids.
pub fn cross_entropy_rows(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let logp = log_softmax(logits)?;
    let picked = logp.gather(&targets.unsqueeze(D::Minus1)?, D::Minus1)?;
    Ok(picked.squeeze(D::Minus1)?.neg()?)
}

/// Per-example loss values with an optional 0/1 mask. The batch loss is the
/// mean over unmasked examples, or zero when every example is masked out.
#[derive(Debug, Clone)]
pub struct PerExample {
    pub values: Tensor,
    pub mask: Option<Tensor>,
    active: usize,
}

impl PerExample {
    pub fn new(values: Tensor) -> Self {
        let active = values.dims().first().copied().unwrap_or(1);
        Self {
            values,
            mask: None,
            active,
        }
    }

    /// `mask[i]` is whether example `i` contributes.
    pub fn masked(values: Tensor, mask: &[bool]) -> Result<Self> {
        let m: Vec<f64> = mask.iter().map(|&b| b as u8 as f64).collect();
        let mask_t = Tensor::from_vec(m, mask.len(), values.device())?.to_dtype(values.dtype())?;
        Ok(Self {
            active: mask.iter().filter(|&&b| b).count(),
            values: (values * &mask_t)?,
            mask: Some(mask_t),
        })
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn mean(&self) -> Result<Tensor> {
        Ok((self.values.sum_all()? / self.active.max(1) as f64)?)
    }
}

pub fn to_f64(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

pub fn to_vec1(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

pub fn to_vec2(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(t.to_dtype(DType::F64)?.to_vec2::<f64>()?)
}

/// Seeded source of reparameterisation noise.
pub struct Noise {
    rng: ChaCha8Rng,
}

impl Noise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for `(seed, step, path)`.
    pub fn derived(seed: u64, step: u64, path: u64) -> Self {
        Self::new(splitmix(splitmix(splitmix(seed) ^ step) ^ path))
    }

    pub fn normal(&mut self, dims: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
        let n = dims.iter().product();
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        Ok(Tensor::from_vec(v, dims, device)?.to_dtype(dtype)?)
    }

    pub fn gumbel(&mut self, dims: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
        let n = dims.iter().product();
        let g = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
        let v: Vec<f64> = (0..n).map(|_| g.sample(&mut self.rng)).collect();
        Ok(Tensor::from_vec(v, dims, device)?.to_dtype(dtype)?)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
