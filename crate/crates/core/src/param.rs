use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub grad: Tensor,
    /// Multiplier applied to the optimizer learning rate for this parameter.
    pub lr_scale: f64,
}

/// Named trainable parameters in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> ParamId {
        debug_assert!(self.find(name).is_none(), "duplicate parameter {name}");
        let grad = Tensor::zeros(tensor.shape());
        self.params.push(Parameter {
            name: name.to_string(),
            tensor,
            grad,
            lr_scale: 1.0,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform init in `[-bound, bound]` with `bound = sqrt(6 / fan_in)` (He uniform).
    pub fn add_he(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = libm::sqrt(6.0 / fan_in.max(1) as f64);
        self.add_uniform(name, shape, bound, rng)
    }

    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        bound: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::from_parts(shape.to_vec(), data))
    }

    pub fn add_const(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::full(shape, value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn set_lr_scale(&mut self, id: ParamId, scale: f64) {
        self.params[id.0].lr_scale = scale;
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale_grads(&mut self, k: f64) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= k);
        }
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// All values concatenated in registration order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.tensor.data().iter().copied())
            .collect()
    }

    /// Overwrites every value from a flat buffer laid out like [`flat_values`](Self::flat_values).
    pub fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(shape_err!(
                "expected {} parameter values, got {}",
                self.numel(),
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("non-finite parameter value"));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.tensor.len();
            p.tensor.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// `(name, shape)` pairs in registration order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape().to_vec()))
            .collect()
    }
}
