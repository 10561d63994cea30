use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

pub type ParamId = usize;

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    shapes: Vec<[usize; 2]>,
    data: Vec<Vec<f64>>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: [usize; 2], data: Vec<f64>) -> Result<ParamId> {
        if data.len() != shape[0] * shape[1] {
            return Err(Error::Shape(format!("{name}: {} values for shape {shape:?}", data.len())));
        }
        if self.index.contains_key(name) {
            return Err(Error::Shape(format!("duplicate parameter '{name}'")));
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.shapes.push(shape);
        self.data.push(data);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_normal(&mut self, name: &str, shape: [usize; 2], std: f64, rng: &mut impl Rng) -> Result<ParamId> {
        let n = shape[0] * shape[1];
        let data = (0..n).map(|_| std * standard_normal(rng)).collect();
        self.add(name, shape, data)
    }

    pub fn add_const(&mut self, name: &str, shape: [usize; 2], value: f64) -> Result<ParamId> {
        self.add(name, shape, vec![value; shape[0] * shape[1]])
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn shape(&self, id: ParamId) -> [usize; 2] {
        self.shapes[id]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id]
    }

    pub fn ids(&self) -> std::ops::Range<ParamId> {
        0..self.names.len()
    }

    pub fn num_scalars(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }

    /// Rounds every value through `f32`, the precision checkpoints store.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.data {
            for x in t.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }

    pub fn zeros_like(&self) -> Grads {
        Grads { data: self.data.iter().map(|t| vec![0.0; t.len()]).collect() }
    }

    /// Copies all tensors whose names exist in `other` with equal shapes.
    pub fn copy_matching(&mut self, other: &ParamStore) -> usize {
        let mut copied = 0;
        for (name, &id) in &self.index {
            if let Some(src) = other.id(name) {
                if other.shape(src) == self.shapes[id] {
                    self.data[id].copy_from_slice(other.get(src));
                    copied += 1;
                }
            }
        }
        copied
    }
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for x in self.data.iter_mut().flatten() {
            *x *= s;
        }
    }

    pub fn zero(&mut self) {
        for x in self.data.iter_mut().flatten() {
            *x = 0.0;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }
}

/// Box-Muller standard normal draw.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
