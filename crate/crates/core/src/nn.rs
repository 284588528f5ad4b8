//! Minimal layer toolkit on top of candle tensors: a named parameter store
//! with seeded initialization, linear and normalization layers, and
//! multi-head attention with additive masks.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Normal(f64),
    Zeros,
    Ones,
    Const(f64),
}

/// Named trainable parameters. Names are stable across runs and ordered.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn root(&mut self) -> Scope<'_> {
        Scope {
            store: self,
            prefix: String::new(),
        }
    }

    fn create(&mut self, name: String, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.vars.contains_key(&name) {
            return Err(Error::input(format!("duplicate parameter {name}")));
        }
        let count: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; count],
            Init::Ones => vec![1.0; count],
            Init::Const(v) => vec![v; count],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).map_err(|e| Error::input(e.to_string()))?;
                (0..count).map(|_| dist.sample(&mut self.rng)).collect()
            }
        };
        let tensor = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&tensor)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name, var);
        Ok(out)
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    /// Overwrite a parameter in place; the shape must match.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| Error::format(format!("unknown parameter {name}")))?;
        if var.dims() != value.dims() {
            return Err(Error::format(format!(
                "parameter {name}: shape {:?} does not match stored {:?}",
                value.dims(),
                var.dims()
            )));
        }
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }
}

/// A name prefix inside a [`ParamStore`].
pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl Scope<'_> {
    pub fn pp(&mut self, name: impl AsRef<str>) -> Scope<'_> {
        let prefix = if self.prefix.is_empty() {
            name.as_ref().to_string()
        } else {
            format!("{}.{}", self.prefix, name.as_ref())
        };
        Scope {
            store: self.store,
            prefix,
        }
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        self.store.create(full, shape, init)
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype
    }
}

/// Build a constant tensor of the store's dtype from f64 values.
pub fn constant(values: Vec<f64>, shape: &[usize], dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(dtype)?)
}

pub fn to_vec_f64(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    pub fn new(scope: &mut Scope<'_>, input: usize, output: usize) -> Result<Self> {
        let std = (1.0 / input as f64).sqrt();
        Ok(Self {
            weight: scope.param("weight", &[input, output], Init::Normal(std))?,
            bias: Some(scope.param("bias", &[output], Init::Zeros)?),
        })
    }

    pub fn without_bias(scope: &mut Scope<'_>, input: usize, output: usize) -> Result<Self> {
        let std = (1.0 / input as f64).sqrt();
        Ok(Self {
            weight: scope.param("weight", &[input, output], Init::Normal(std))?,
            bias: None,
        })
    }

    pub fn from_tensors(weight: Tensor, bias: Option<Tensor>) -> Self {
        Self { weight, bias }
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let input = *dims.last().ok_or_else(|| Error::input("linear on a scalar"))?;
        let rows = x.elem_count() / input.max(1);
        let flat = x.reshape((rows, input))?;
        let mut y = flat.matmul(&self.weight)?;
        if let Some(b) = &self.bias {
            y = y.broadcast_add(b)?;
        }
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.weight.dim(1)?;
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(scope: &mut Scope<'_>, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: scope.param("gamma", &[dim], Init::Ones)?,
            beta: scope.param("beta", &[dim], Init::Zeros)?,
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

/// Two-layer GELU feed-forward block.
#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(scope: &mut Scope<'_>, dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            up: Linear::new(&mut scope.pp("up"), dim, hidden)?,
            down: Linear::new(&mut scope.pp("down"), hidden, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&gelu(&self.up.forward(x)?)?)
    }
}

/// Softmax over the last dimension. Rows may contain `-inf` entries as long
/// as at least one entry is finite.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Tanh-approximated GELU composed from primitive ops, so its gradient is
/// exact to rounding (the fused op's backward uses truncated constants).
pub fn gelu(x: &Tensor) -> Result<Tensor> {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let inner = ((x + (x.sqr()? * x)?.affine(0.044715, 0.0)?)? * c)?;
    Ok(((inner.tanh()? + 1.0)? * x)?.affine(0.5, 0.0)?)
}

/// Logistic function via `tanh`; the `1 / (1 + exp(-x))` form has a NaN
/// gradient once `exp(-x)` overflows.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

/// Multi-head scaled dot-product attention with an optional additive bias
/// broadcastable to `(batch, heads, queries, keys)`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(scope: &mut Scope<'_>, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            q: Linear::new(&mut scope.pp("q"), dim, dim)?,
            k: Linear::new(&mut scope.pp("k"), dim, dim)?,
            v: Linear::new(&mut scope.pp("v"), dim, dim)?,
            o: Linear::new(&mut scope.pp("o"), dim, dim)?,
            heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, n, d) = x.dims3()?;
        Ok(x
            .reshape((b, n, self.heads, d / self.heads))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    pub fn forward(
        &self,
        query: &Tensor,
        key: &Tensor,
        value: &Tensor,
        bias: Option<&Tensor>,
    ) -> Result<Tensor> {
        Ok(self.forward_with_weights(query, key, value, bias)?.0)
    }

    /// Returns the output and the attention weights `(batch, heads, q, k)`.
    pub fn forward_with_weights(
        &self,
        query: &Tensor,
        key: &Tensor,
        value: &Tensor,
        bias: Option<&Tensor>,
    ) -> Result<(Tensor, Tensor)> {
        let (b, nq, d) = query.dims3()?;
        let head_dim = d / self.heads;
        let q = self.split_heads(&self.q.forward(query)?)?;
        let k = self.split_heads(&self.k.forward(key)?)?;
        let v = self.split_heads(&self.v.forward(value)?)?;
        let mut scores = (q.matmul(&k.t()?)? * (1.0 / (head_dim as f64).sqrt()))?;
        if let Some(bias) = bias {
            scores = scores.broadcast_add(bias)?;
        }
        let weights = softmax_last(&scores)?;
        let out = weights
            .matmul(&v)?
            .transpose(1, 2)?
            .reshape((b, nq, d))?;
        Ok((self.o.forward(&out)?, weights))
    }
}

/// Fixed 2D sinusoidal position code for an `h x w` grid, row-major,
/// `dim` channels (half for rows, half for columns).
pub fn sine_position_2d(h: usize, w: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; h * w * dim];
    let freq = |k: usize, width: usize| 10000f64.powf(2.0 * (k / 2) as f64 / width.max(1) as f64);
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * dim;
            let py = (y as f64 + 0.5) / h as f64 * std::f64::consts::TAU;
            let px = (x as f64 + 0.5) / w as f64 * std::f64::consts::TAU;
            for k in 0..half {
                let a = py * 8.0 / freq(k, half);
                out[base + k] = if k % 2 == 0 { a.sin() } else { a.cos() };
            }
            for k in 0..(dim - half) {
                let a = px * 8.0 / freq(k, dim - half);
                out[base + half + k] = if k % 2 == 0 { a.sin() } else { a.cos() };
            }
        }
    }
    out
}

/// Row-major bilinear resampling matrix from an `h x w` grid to `out_h x
/// out_w` (half-pixel centers, edge clamped). Shape `(out_h*out_w, h*w)`.
pub fn bilinear_matrix(h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    fn axis(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
        (0..dst)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                let t = pos - lo as f64;
                if hi == lo {
                    vec![(lo, 1.0)]
                } else {
                    vec![(lo, 1.0 - t), (hi, t)]
                }
            })
            .collect()
    }
    let ay = axis(h, out_h);
    let ax = axis(w, out_w);
    let mut m = vec![0.0; out_h * out_w * h * w];
    for (oy, wy) in ay.iter().enumerate() {
        for (ox, wx) in ax.iter().enumerate() {
            let row = (oy * out_w + ox) * h * w;
            for &(sy, fy) in wy {
                for &(sx, fx) in wx {
                    m[row + sy * w + sx] += fy * fx;
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_gradient_survives_saturation() {
        let x = candle_core::Var::new(&[-200f32, 0.0, 200.0], &Device::Cpu).unwrap();
        let y = sigmoid(x.as_tensor()).unwrap();
        assert_eq!(to_vec_f64(&y).unwrap(), vec![0.0, 0.5, 1.0]);
        let g = y.sum_all().unwrap().backward().unwrap();
        let g = to_vec_f64(g.get(x.as_tensor()).unwrap()).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.0]);
    }

    #[test]
    fn softmax_handles_negative_infinity() {
        let x = Tensor::new(&[[0f64, f64::NEG_INFINITY, 0.0]], &Device::Cpu).unwrap();
        let s = to_vec_f64(&softmax_last(&x).unwrap()).unwrap();
        assert_eq!(s, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let x = Tensor::new(&[[1.0f64, -2.0, 0.5, 3.0]], &Device::Cpu).unwrap();
        let a = to_vec_f64(&log_softmax_last(&x).unwrap()).unwrap();
        let b = to_vec_f64(&softmax_last(&x).unwrap().log().unwrap()).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_rows_sum_to_one() {
        let m = bilinear_matrix(2, 3, 8, 12);
        for row in m.chunks(6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let id = bilinear_matrix(3, 3, 3, 3);
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(id[i * 9 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn store_rejects_duplicate_names_and_is_seeded() {
        let mut a = ParamStore::new(DType::F64, 3);
        let ta = a.root().pp("x").param("w", &[4], Init::Normal(1.0)).unwrap();
        assert!(a.root().pp("x").param("w", &[4], Init::Zeros).is_err());
        let mut b = ParamStore::new(DType::F64, 3);
        let tb = b.root().pp("x").param("w", &[4], Init::Normal(1.0)).unwrap();
        assert_eq!(to_vec_f64(&ta).unwrap(), to_vec_f64(&tb).unwrap());
        assert!(a.get("x.w").is_some());
    }
}
