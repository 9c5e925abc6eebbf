use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Handle to a parameter inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A trainable tensor with a stable name and a gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Named parameters of one model, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::param("parameter", format!("duplicate parameter name {name:?}")));
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        let grad = value.zeros_like();
        self.params.push(Parameter { name, value, grad });
        Ok(ParamId(id))
    }

    /// Registers a parameter drawn uniformly from `[-scale, scale]`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = T::lit(rng.gen_range(-scale..=scale));
        }
        self.add(name, t)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].grad
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Global L2 norm over all gradients.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad.sum_squares().as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = T::lit(max_norm / norm);
            for p in &mut self.params {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    /// `name=‖value‖₂` for every parameter, for diagnostics.
    pub fn norms_summary(&self) -> String {
        self.params
            .iter()
            .map(|p| format!("{}={:.4e}", p.name, p.value.sum_squares().as_f64().sqrt()))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
