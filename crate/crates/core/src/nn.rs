//! Named parameter storage and the small network building blocks shared by
//! the encoder and the policies.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng as _;

use crate::autodiff::{Grads, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::tensor_file::{NamedTensor, TensorFile};

/// Ordered collection of named 2-D parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Array2<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<T>) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> &Array2<T> {
        &self.tensors[self.index[name]]
    }

    pub fn try_get(&self, name: &str) -> Option<&Array2<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<T> {
        let i = self.index[name];
        &mut self.tensors[i]
    }

    pub fn tensors(&self) -> &[Array2<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<T>)> {
        self.names.iter().map(|s| s.as_str()).zip(self.tensors.iter())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Hex SHA-256 over names, shapes and values (as `f64`).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (n, t) in self.iter() {
            h.update(n.as_bytes());
            h.update((t.nrows() as u64).to_le_bytes());
            h.update((t.ncols() as u64).to_le_bytes());
            for v in t.iter() {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn norm_report(&self) -> String {
        self.iter()
            .map(|(n, t)| {
                let norm = t.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
                format!("{n}={norm:.4e}")
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Register every tensor on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> ParamVars {
        let vars = self.tensors.iter().map(|t| tape.param(t.clone())).collect();
        ParamVars {
            vars,
            index: self.index.clone(),
        }
    }

    /// Register every tensor as a constant (inference only).
    pub fn register_frozen(&self, tape: &mut Tape<T>) -> ParamVars {
        let vars = self.tensors.iter().map(|t| tape.constant(t.clone())).collect();
        ParamVars {
            vars,
            index: self.index.clone(),
        }
    }

    /// Gradients aligned with this set, zero where a tensor was unused.
    pub fn collect_grads(&self, vars: &ParamVars, grads: &Grads<T>) -> Vec<Array2<T>> {
        self.tensors
            .iter()
            .zip(&vars.vars)
            .map(|(t, &v)| grads.get_or_zeros(v, t.dim()))
            .collect()
    }

    pub fn to_tensors(&self, file: &mut TensorFile) {
        for (n, t) in self.iter() {
            file.push(NamedTensor::from_array(n, t));
        }
    }

    /// Rebuild a set from a container, keeping the container's order.
    pub fn from_tensors(file: &TensorFile, prefix_filter: impl Fn(&str) -> bool) -> Result<Self> {
        let mut ps = ParamSet::new();
        for t in &file.tensors {
            if prefix_filter(&t.name) {
                ps.push(t.name.clone(), t.to_array()?);
            }
        }
        Ok(ps)
    }

    /// Same names and shapes as `other`.
    pub fn check_layout(&self, other: &ParamSet<T>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape(format!(
                "parameter names differ: {:?} vs {:?}",
                self.names, other.names
            )));
        }
        for ((n, a), b) in self.iter().zip(other.tensors()) {
            if a.dim() != b.dim() {
                return Err(Error::Shape(format!(
                    "parameter `{n}` has shape {:?}, expected {:?}",
                    b.dim(),
                    a.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Tape handles for a registered [`ParamSet`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl ParamVars {
    pub fn var(&self, name: &str) -> Var {
        self.vars[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Uniform `±1/sqrt(fan_in)` initialization.
pub fn init_uniform<T: Real>(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Array2<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-bound..bound)))
}

/// Add parameters `{prefix}.{i}.w` / `{prefix}.{i}.b` for an MLP with the
/// given layer widths.
pub fn init_mlp<T: Real>(ps: &mut ParamSet<T>, prefix: &str, widths: &[usize], rng: &mut Rng) {
    for (i, pair) in widths.windows(2).enumerate() {
        ps.push(format!("{prefix}.{i}.w"), init_uniform(pair[0], pair[1], pair[0], rng));
        ps.push(format!("{prefix}.{i}.b"), Array2::zeros((1, pair[1])));
    }
}

pub fn mlp_depth<T: Real>(ps: &ParamSet<T>, prefix: &str) -> usize {
    (0..)
        .take_while(|i| ps.try_get(&format!("{prefix}.{i}.w")).is_some())
        .count()
}

/// ReLU MLP on the tape; no activation after the final layer.
pub fn mlp_forward<T: Real>(tape: &mut Tape<T>, pv: &ParamVars, prefix: &str, depth: usize, x: Var) -> Var {
    let mut h = x;
    for i in 0..depth {
        let w = pv.var(&format!("{prefix}.{i}.w"));
        let b = pv.var(&format!("{prefix}.{i}.b"));
        h = tape.matmul(h, w);
        h = tape.add_row(h, b);
        if i + 1 < depth {
            h = tape.relu(h);
        }
    }
    h
}

/// Plain forward pass without recording gradients.
pub fn mlp_eval<T: Real>(ps: &ParamSet<T>, prefix: &str, x: &Array2<T>) -> Array2<T> {
    let depth = mlp_depth(ps, prefix);
    let mut h = x.clone();
    for i in 0..depth {
        h = h.dot(ps.get(&format!("{prefix}.{i}.w"))) + ps.get(&format!("{prefix}.{i}.b"));
        if i + 1 < depth {
            h.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
        }
    }
    h
}
