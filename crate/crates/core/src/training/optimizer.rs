use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// Adam with decoupled weight decay. Parameters without a gradient in a
/// step are left untouched, moments included.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient norm above which all gradients are rescaled.
    pub max_grad_norm: Option<f64>,
    steps: BTreeMap<String, u64>,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            max_grad_norm: None,
            steps: BTreeMap::new(),
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn with_max_grad_norm(mut self, max: Option<f64>) -> Self {
        self.max_grad_norm = max;
        self
    }

    /// Apply one update; returns the global gradient norm before clipping.
    pub fn step(&mut self, store: &ParamStore, grads: &GradStore, lr: f64) -> Result<f64> {
        // gradients carry their backward graph; keep only the values
        let present: Vec<_> = store
            .vars()
            .iter()
            .filter_map(|(name, var)| grads.get(var.as_tensor()).map(|g| (name, var, g.detach())))
            .collect();
        let mut sq = 0.0;
        for (name, _, g) in &present {
            let s = g.sqr()?.sum_all()?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            if !s.is_finite() {
                return Err(Error::Training(format!("non-finite gradient for {name}")));
            }
            sq += s;
        }
        let norm = sq.sqrt();
        let factor = match self.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        for (name, var, g) in present {
            let g = &if factor < 1.0 { (g * factor)? } else { g };
            let t = self.steps.entry(name.clone()).or_insert(0);
            *t += 1;
            let m = match self.first.get(name) {
                Some(m) => ((m * self.beta1)? + (g * (1.0 - self.beta1))?)?,
                None => (g * (1.0 - self.beta1))?,
            };
            let v = match self.second.get(name) {
                Some(v) => ((v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?,
                None => (g.sqr()? * (1.0 - self.beta2))?,
            };
            let m_hat = (&m / (1.0 - self.beta1.powi(*t as i32)))?;
            let v_hat = (&v / (1.0 - self.beta2.powi(*t as i32)))?;
            let update = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            let p = &var.as_tensor().detach();
            let decayed = (p - (p * (lr * self.weight_decay))?)?;
            var.set(&(decayed - (update * lr)?)?)?;
            self.first.insert(name.clone(), m.detach());
            self.second.insert(name.clone(), v.detach());
        }
        Ok(norm)
    }

    /// Moment tensors and per-parameter step counts, for checkpointing.
    pub fn state(&self) -> Vec<(String, u64, Tensor, Tensor)> {
        self.first
            .iter()
            .map(|(name, m)| {
                (
                    name.clone(),
                    self.steps[name],
                    m.clone(),
                    self.second[name].clone(),
                )
            })
            .collect()
    }

    pub fn restore(&mut self, name: &str, steps: u64, first: Tensor, second: Tensor) -> Result<()> {
        if first.dims() != second.dims() {
            return Err(Error::format(format!("moment shapes differ for {name}")));
        }
        self.steps.insert(name.to_string(), steps);
        self.first.insert(name.to_string(), first);
        self.second.insert(name.to_string(), second);
        Ok(())
    }
}
