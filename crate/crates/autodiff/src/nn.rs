//! Named parameter storage and the small layer kit the models share.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered collection of named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces every tensor, checking names and shapes line up.
    pub fn load(&mut self, named: Vec<(String, Tensor)>) -> Result<()> {
        if named.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.tensors.len(),
                named.len()
            )));
        }
        for (i, (name, t)) in named.into_iter().enumerate() {
            if name != self.names[i] || t.shape() != self.tensors[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {i}: expected {} {:?}, found {name} {:?}",
                    self.names[i],
                    self.tensors[i].shape(),
                    t.shape()
                )));
            }
            self.tensors[i] = t;
        }
        Ok(())
    }

    /// Registers every parameter as a differentiable leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound { vars: self.tensors.iter().map(|t| tape.param(t.clone())).collect() }
    }
}

/// A [`ParamStore`] attached to one tape.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    /// Wraps leaves created elsewhere (e.g. by a gradient check) in store order.
    pub fn from_vars(vars: Vec<Var<'t>>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    /// Gradients in store order.
    pub fn grads(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|v| grads.get(*v)).collect()
    }
}

/// Glorot-uniform bound for a `fan_in × fan_out` weight.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Affine map `x·W + b` over rows.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let w = Tensor::uniform(&[fan_in, fan_out], glorot_bound(fan_in, fan_out), rng);
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        Self { weight, bias, fan_in, fan_out }
    }

    /// Weight and bias both uniform on `±1/√fan_in`. A nonzero bias matters
    /// for narrow inputs: a zero-bias lift of a scalar followed by layer
    /// normalization maps every positive input to the same vector.
    pub fn new_fan_in<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), Tensor::uniform(&[fan_in, fan_out], bound, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::uniform(&[fan_out], bound, rng));
        Self { weight, bias, fan_in, fan_out }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(p.var(self.weight))?.add(p.var(self.bias))
    }
}

/// Learned per-feature scale and shift for layer normalization over columns.
#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[dim], 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.layer_norm(1, Some(p.var(self.gamma)), Some(p.var(self.beta)))
    }
}

/// Lookup table mapping class ids to dense vectors.
#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut R) -> Self {
        let table = store.add(format!("{name}.table"), Tensor::uniform(&[vocab, dim], 1.0, rng));
        Self { table, vocab, dim }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, tape: &'t Tape, labels: &[usize]) -> Result<Var<'t>> {
        tape.embed(p.var(self.table), labels)
    }
}

/// Stack of relu-activated linear layers followed by a linear output layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Vec<Linear>,
    pub out: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        width: usize,
        layers: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut hidden = Vec::with_capacity(layers);
        let mut fan_in = input;
        for i in 0..layers {
            hidden.push(Linear::new(store, &format!("{name}.hidden{i}"), fan_in, width, rng));
            fan_in = width;
        }
        let out = Linear::new(store, &format!("{name}.out"), fan_in, output, rng);
        Self { hidden, out }
    }

    /// Forward pass; `dropout` is `(p, seed)` applied after each hidden
    /// activation when `training`.
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>, dropout: Option<(f64, u64)>, training: bool) -> Result<Var<'t>> {
        let mut h = x;
        for (i, layer) in self.hidden.iter().enumerate() {
            h = layer.forward(p, h)?.relu();
            if let Some((prob, seed)) = dropout {
                h = h.dropout(prob, crate::rng::mix(seed, i as u64), training)?;
            }
        }
        self.out.forward(p, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.out))
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn linear_shapes_and_names() {
        let mut store = ParamStore::new();
        let mut rng = stream(1, 0);
        let lin = Linear::new(&mut store, "proj", 3, 5, &mut rng);
        assert_eq!(store.names(), &["proj.weight", "proj.bias"]);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.constant(Tensor::zeros(&[4, 3]));
        assert_eq!(lin.forward(&p, x).unwrap().shape(), vec![4, 5]);
    }

    #[test]
    fn load_rejects_mismatched_layout() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(&[2]));
        assert!(store.load(vec![("a".into(), Tensor::zeros(&[3]))]).is_err());
        assert!(store.load(vec![("b".into(), Tensor::zeros(&[2]))]).is_err());
        assert!(store.load(vec![("a".into(), Tensor::full(&[2], 1.0))]).is_ok());
        assert_eq!(store.tensors()[0].data(), &[1.0, 1.0]);
    }
}
