use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Storage precision of parameter values.
///
/// Arithmetic always runs in 64 bits. With `F32` every stored value is
/// rounded to the nearest `f32` after initialization and after each
/// optimizer step, so checkpoints written as 32-bit reals reload exactly.
/// `F64` keeps full precision and is what gradient checks use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }
}

/// Handle into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters with matching gradient slots and Adam state.
#[derive(Clone, Debug)]
pub struct ParamStore {
    names: Vec<String>,
    index: HashMap<String, ParamId>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    has_grad: Vec<bool>,
    pub(crate) first_moment: Vec<Vec<f64>>,
    pub(crate) second_moment: Vec<Vec<f64>>,
    pub(crate) step: u64,
    precision: Precision,
}

impl ParamStore {
    pub fn new(precision: Precision) -> Self {
        ParamStore {
            names: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
            has_grad: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Registers a parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let mut value = value;
        let p = self.precision;
        value.data_mut().iter_mut().for_each(|v| *v = p.round(*v));
        let id = ParamId(self.values.len());
        let n = value.len();
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.has_grad.push(false);
        self.first_moment.push(vec![0.0; n]);
        self.second_moment.push(vec![0.0; n]);
        Ok(id)
    }

    /// Registers a weight drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn insert_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    /// Mutable access to a value. Rounding to the store precision is the
    /// caller's concern; use [`ParamStore::set_value`] to have it applied.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::shape(
                "set_value",
                format!("{:?}", self.values[id.0].shape()),
                format!("{:?}", value.shape()),
            ));
        }
        let mut value = value;
        let p = self.precision;
        value.data_mut().iter_mut().for_each(|v| *v = p.round(*v));
        self.values[id.0] = value;
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for (g, flag) in self.grads.iter_mut().zip(self.has_grad.iter_mut()) {
            g.data_mut().iter_mut().for_each(|v| *v = 0.0);
            *flag = false;
        }
    }

    /// Adds `grads` into the gradient slots and marks every slot populated.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        if grads.per_param.len() != self.grads.len() {
            return Err(Error::shape(
                "accumulate",
                self.grads.len(),
                grads.per_param.len(),
            ));
        }
        for ((slot, g), flag) in self
            .grads
            .iter_mut()
            .zip(&grads.per_param)
            .zip(self.has_grad.iter_mut())
        {
            for (s, v) in slot.data_mut().iter_mut().zip(g) {
                *s += v;
            }
            *flag = true;
        }
        Ok(())
    }

    pub(crate) fn grad_populated(&self, id: ParamId) -> bool {
        self.has_grad[id.0]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    /// A zeroed gradient buffer with this store's layout.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            per_param: self.values.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// Per-parameter gradient buffer, aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub(crate) per_param: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.per_param[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.per_param[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.per_param.iter_mut().zip(&other.per_param) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.per_param
            .iter_mut()
            .flat_map(|g| g.iter_mut())
            .for_each(|v| *v *= factor);
    }

    pub fn global_norm(&self) -> f64 {
        self.per_param
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.per_param.iter().flatten().all(|v| v.is_finite())
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm
    /// before clipping. An infinite `max_norm` leaves the buffer untouched.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if max_norm.is_finite() && norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }
}
