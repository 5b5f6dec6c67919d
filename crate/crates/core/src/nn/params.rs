use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Gradients, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors, ordered by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    tensors: BTreeMap<String, Tensor>,
}

/// Expected parameter names and shapes for one network.
pub type Layout = Vec<(String, Vec<usize>)>;

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> Params {
        Params {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Check names and shapes against a layout.
    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        if self.tensors.len() != layout.len() {
            return Err(Error::config(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for (name, shape) in layout {
            let t = self.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::config(format!(
                    "parameter `{name}` has shape {:?}, configuration expects {:?}",
                    t.shape(),
                    shape
                )));
            }
        }
        Ok(())
    }

    /// FNV-1a over names and value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: &[u8]| {
            for &x in b {
                h ^= x as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (k, v) in &self.tensors {
            eat(k.as_bytes());
            for x in v.data() {
                eat(&x.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Wrap every tensor as a gradient-tracked leaf.
    pub fn bind(&self) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|(k, v)| (k.clone(), Var::param(v.clone()))).collect(),
        }
    }

    /// Wrap every tensor as a constant (evaluation mode).
    pub fn bind_frozen(&self) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|(k, v)| (k.clone(), Var::constant(v.clone()))).collect(),
        }
    }
}

/// Parameters attached to a differentiation graph.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<&Var> {
        self.vars
            .get(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    /// Gradient for every parameter; zeros where the output does not depend on it.
    pub fn grads(&self, g: &Gradients) -> Params {
        Params {
            tensors: self
                .vars
                .iter()
                .map(|(k, v)| (k.clone(), g.get(v).cloned().unwrap_or_else(|| Tensor::zeros(v.shape()))))
                .collect(),
        }
    }
}

/// Zero-mean Gaussian weights with variance `1 / fan_in`.
pub fn init_fan_in<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let std = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}
