//! Named parameter storage with gradient slots.
//!
//! Every trainable network registers its weights here under a
//! slash-separated name (e.g. `"sg/dec0/conv1_w"`). Gradients accumulate
//! across backward passes until `zero_grads` is called, matching the
//! optimizer contract.

use super::rng::Rng;
use super::tensor::Tensor;
use std::collections::HashMap;

/// Handle to one parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) u32);

pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Vec<f32>>,
    by_name: HashMap<String, ParamId>,
    grads_populated: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            by_name: HashMap::new(),
            grads_populated: false,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(!self.by_name.contains_key(name), "duplicate parameter {name}");
        let id = ParamId(self.values.len() as u32);
        self.names.push(name.to_string());
        self.grads.push(vec![0.0; value.numel()]);
        self.values.push(value);
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// He-style uniform init scaled by fan-in.
    pub fn add_uniform_fan_in(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut Rng,
    ) -> ParamId {
        let limit = (6.0 / fan_in.max(1) as f32).sqrt();
        let n: usize = shape.iter().product();
        let data = rng.uniform_vec(n, -limit, limit);
        self.add(name, Tensor::new(shape, data))
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> ParamId {
        let t = Tensor::zeros(shape);
        self.add(name, t)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0 as usize]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0 as usize]
    }

    pub fn grad(&self, id: ParamId) -> &[f32] {
        &self.grads[id.0 as usize]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len() as u32).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
        self.grads_populated = false;
    }

    pub fn grads_populated(&self) -> bool {
        self.grads_populated
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &[f32]) {
        let slot = &mut self.grads[id.0 as usize];
        assert_eq!(slot.len(), grad.len(), "gradient length mismatch for {}", self.names[id.0 as usize]);
        for (s, g) in slot.iter_mut().zip(grad) {
            *s += g;
        }
        self.grads_populated = true;
    }

    /// Copies values from `src` position-by-position; layouts must match.
    /// Used for target-network refreshes.
    pub fn copy_values_from(&mut self, src: &ParamStore) {
        assert_eq!(self.names, src.names, "param store layouts differ");
        self.values.clone_from(&src.values);
    }

    /// In-place polyak average: self ← tau·self + (1−tau)·src.
    pub fn polyak_from(&mut self, src: &ParamStore, tau: f32) {
        assert_eq!(self.names, src.names, "param store layouts differ");
        for (dst, s) in self.values.iter_mut().zip(&src.values) {
            for (d, v) in dst.data_mut().iter_mut().zip(s.data()) {
                *d = tau * *d + (1.0 - tau) * *v;
            }
        }
    }

    pub fn total_elements(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            names: self.names.clone(),
            values: self.values.clone(),
            grads: self.grads.clone(),
            by_name: self.by_name.clone(),
            grads_populated: self.grads_populated,
        }
    }
}
