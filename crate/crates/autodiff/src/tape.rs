use std::cell::RefCell;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Error, Result};
use crate::rng;
use crate::tensor::{matmul_raw, Tensor};

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    Tanh(usize),
    Softplus(usize),
    Square(usize),
    Sum(usize),
    Mean { src: usize, axis: usize },
    Softmax { src: usize, axis: usize },
    LogSoftmax { src: usize, axis: usize },
    LayerNorm { src: usize, axis: usize, gamma: Option<usize>, beta: Option<usize>, xhat: Vec<f64>, inv_std: Vec<f64> },
    Dropout { src: usize, mask: Vec<f64> },
    Embed { table: usize, indices: Vec<usize> },
    Concat { srcs: Vec<usize>, axis: usize },
    Narrow { src: usize, axis: usize, start: usize },
    Transpose(usize),
    GaussianSample { mu: usize, sigma: usize, noise: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Records operations in execution order for a single reverse pass.
///
/// A tape is single-threaded. Build one per forward pass, call
/// [`Tape::backward`] once, then drop it.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients of a scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`; zeros when `var` does not influence the loss.
    pub fn get(&self, var: Var<'_>) -> Tensor {
        match &self.grads[var.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.id]),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A leaf that gradients flow into.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_node(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { value, op, requires_grad });
        Var { tape: self, id: inner.nodes.len() - 1 }
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let requires_grad = {
            let inner = self.inner.borrow();
            parents(&op).iter().any(|&p| inner.nodes[p].requires_grad)
        };
        self.push_node(value, op, requires_grad)
    }

    fn check<'t>(&'t self, vars: &[Var<'t>]) -> Result<()> {
        if vars.iter().all(|v| std::ptr::eq(v.tape, self)) {
            Ok(())
        } else {
            Err(Error::ForeignVar)
        }
    }

    /// Gathers rows of `table` (`[vocab, dim]`) into a `[indices.len(), dim]` result.
    pub fn embed<'t>(&'t self, table: Var<'t>, indices: &[usize]) -> Result<Var<'t>> {
        self.check(&[table])?;
        let value = {
            let inner = self.inner.borrow();
            let t = &inner.nodes[table.id].value;
            if t.rank() != 2 {
                return Err(shape_err("embed", format!("table must be 2-D, got {:?}", t.shape())));
            }
            let (vocab, dim) = (t.shape()[0], t.shape()[1]);
            let mut data = Vec::with_capacity(indices.len() * dim);
            for &ix in indices {
                if ix >= vocab {
                    return Err(Error::Invalid(format!("embedding index {ix} >= vocab {vocab}")));
                }
                data.extend_from_slice(t.row(ix));
            }
            Tensor::new(vec![indices.len(), dim], data)?
        };
        Ok(self.push(value, Op::Embed { table: table.id, indices: indices.to_vec() }))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat<'t>(&'t self, vars: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        self.check(vars)?;
        if vars.is_empty() {
            return Err(Error::Invalid("concat of zero tensors".into()));
        }
        let value = {
            let inner = self.inner.borrow();
            let first = &inner.nodes[vars[0].id].value;
            let (outer, _, inner_sz) = first.axis_split(axis)?;
            let mut total = 0;
            for v in vars {
                let s = inner.nodes[v.id].value.shape();
                let ok = s.len() == first.rank()
                    && s.iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
                if !ok {
                    return Err(shape_err("concat", format!("{:?} vs {:?}", first.shape(), s)));
                }
                total += s[axis];
            }
            let mut data = Vec::with_capacity(outer * total * inner_sz);
            for o in 0..outer {
                for v in vars {
                    let t = &inner.nodes[v.id].value;
                    let chunk = t.shape()[axis] * inner_sz;
                    data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                }
            }
            let mut shape = first.shape().to_vec();
            shape[axis] = total;
            Tensor::new(shape, data)?
        };
        Ok(self.push(value, Op::Concat { srcs: vars.iter().map(|v| v.id).collect(), axis }))
    }

    /// Reparameterized Gaussian draw `mu + sigma * noise` with seeded standard
    /// normal noise. Differentiable in `mu` and `sigma`; the noise is fixed.
    pub fn gaussian_sample<'t>(&'t self, mu: Var<'t>, sigma: Var<'t>, seed: u64) -> Result<Var<'t>> {
        self.check(&[mu, sigma])?;
        let (value, noise) = {
            let inner = self.inner.borrow();
            let m = &inner.nodes[mu.id].value;
            let s = &inner.nodes[sigma.id].value;
            if m.shape() != s.shape() {
                return Err(shape_err("gaussian_sample", format!("{:?} vs {:?}", m.shape(), s.shape())));
            }
            let mut r = rng::stream(seed, 0x6a55);
            let noise: Vec<f64> = (0..m.numel()).map(|_| r.sample(StandardNormal)).collect();
            let data = m.data().iter().zip(s.data()).zip(&noise).map(|((m, s), e)| m + s * e).collect();
            (Tensor::new(m.shape().to_vec(), data)?, noise)
        };
        Ok(self.push(value, Op::GaussianSample { mu: mu.id, sigma: sigma.id, noise }))
    }

    /// Reverse pass from a scalar `loss`. The tape cannot be reused afterwards.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::ForeignVar);
        }
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(Error::TapeReused);
        }
        let loss_shape = inner.nodes[loss.id].value.shape().to_vec();
        if inner.nodes[loss.id].value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        inner.consumed = true;
        let nodes = &inner.nodes;
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(&loss_shape, 1.0));

        for id in (0..=loss.id).rev() {
            let Some(grad) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let mut acc = Accumulator { nodes, grads: &mut grads };
            propagate(node, &grad, &mut acc);
            grads[id] = Some(grad);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

struct Accumulator<'a> {
    nodes: &'a [Node],
    grads: &'a mut Vec<Option<Tensor>>,
}

impl Accumulator<'_> {
    fn value(&self, id: usize) -> &Tensor {
        &self.nodes[id].value
    }

    fn add(&mut self, id: usize, g: Tensor) {
        if !self.nodes[id].requires_grad {
            return;
        }
        match &mut self.grads[id] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn add_data(&mut self, id: usize, data: Vec<f64>) {
        let shape = self.nodes[id].value.shape().to_vec();
        self.add(id, Tensor::new(shape, data).expect("gradient shape"));
    }
}

fn parents(op: &Op) -> Vec<usize> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Relu(a)
        | Op::Exp(a)
        | Op::Log(a)
        | Op::Sigmoid(a)
        | Op::Tanh(a)
        | Op::Softplus(a)
        | Op::Square(a)
        | Op::Sum(a)
        | Op::Transpose(a) => vec![*a],
        Op::Mean { src, .. }
        | Op::Softmax { src, .. }
        | Op::LogSoftmax { src, .. }
        | Op::Dropout { src, .. }
        | Op::Narrow { src, .. } => vec![*src],
        Op::LayerNorm { src, gamma, beta, .. } => {
            let mut p = vec![*src];
            p.extend(gamma.iter().chain(beta.iter()));
            p
        }
        Op::Embed { table, .. } => vec![*table],
        Op::Concat { srcs, .. } => srcs.clone(),
        Op::GaussianSample { mu, sigma, .. } => vec![*mu, *sigma],
    }
}

/// Sums a full-shape gradient down to a suffix-broadcast operand.
fn reduce_to(g: &[f64], numel: usize) -> Vec<f64> {
    if g.len() == numel {
        return g.to_vec();
    }
    let mut out = vec![0.0; numel];
    for chunk in g.chunks(numel) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
}

fn propagate(node: &Node, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let g = grad.data();
    let y = node.value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (acc.value(*a), acc.value(*b));
            let (n, k, m) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            let da = matmul_raw(g, bv.data(), n, m, k, false, true);
            let db = matmul_raw(av.data(), g, k, n, m, true, false);
            acc.add_data(*a, da);
            acc.add_data(*b, db);
        }
        Op::Add(a, b) => {
            let nb = acc.value(*b).numel();
            acc.add_data(*a, g.to_vec());
            acc.add_data(*b, reduce_to(g, nb));
        }
        Op::Sub(a, b) => {
            let nb = acc.value(*b).numel();
            acc.add_data(*a, g.to_vec());
            acc.add_data(*b, reduce_to(g, nb).into_iter().map(|v| -v).collect());
        }
        Op::Mul(a, b) => {
            let (av, bv) = (acc.value(*a).data(), acc.value(*b).data());
            let nb = bv.len();
            let da: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi * bv[i % nb]).collect();
            let full_db: Vec<f64> = g.iter().zip(av).map(|(gi, ai)| gi * ai).collect();
            acc.add_data(*a, da);
            acc.add_data(*b, reduce_to(&full_db, nb));
        }
        Op::Scale(a, s) => acc.add_data(*a, g.iter().map(|v| v * s).collect()),
        Op::AddScalar(a) => acc.add_data(*a, g.to_vec()),
        Op::Relu(a) => {
            let x = acc.value(*a).data();
            acc.add_data(*a, g.iter().zip(x).map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 }).collect());
        }
        Op::Exp(a) => acc.add_data(*a, g.iter().zip(y).map(|(gi, yi)| gi * yi).collect()),
        Op::Log(a) => {
            let x = acc.value(*a).data();
            acc.add_data(*a, g.iter().zip(x).map(|(gi, xi)| gi / xi).collect());
        }
        Op::Sigmoid(a) => acc.add_data(*a, g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect()),
        Op::Tanh(a) => acc.add_data(*a, g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect()),
        Op::Softplus(a) => {
            let x = acc.value(*a).data();
            acc.add_data(*a, g.iter().zip(x).map(|(gi, xi)| gi * sigmoid(*xi)).collect());
        }
        Op::Square(a) => {
            let x = acc.value(*a).data();
            acc.add_data(*a, g.iter().zip(x).map(|(gi, xi)| 2.0 * gi * xi).collect());
        }
        Op::Sum(a) => {
            let n = acc.value(*a).numel();
            acc.add_data(*a, vec![g[0]; n]);
        }
        Op::Mean { src, axis } => {
            let (outer, len, inner) = acc.value(*src).axis_split(*axis).expect("axis");
            let mut dx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for l in 0..len {
                    for i in 0..inner {
                        dx[(o * len + l) * inner + i] = g[o * inner + i] / len as f64;
                    }
                }
            }
            acc.add_data(*src, dx);
        }
        Op::Softmax { src, axis } => {
            let (outer, len, inner) = node.value.axis_split(*axis).expect("axis");
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |l: usize| (o * len + l) * inner + i;
                    let dot: f64 = (0..len).map(|l| g[idx(l)] * y[idx(l)]).sum();
                    for l in 0..len {
                        dx[idx(l)] = y[idx(l)] * (g[idx(l)] - dot);
                    }
                }
            }
            acc.add_data(*src, dx);
        }
        Op::LogSoftmax { src, axis } => {
            let (outer, len, inner) = node.value.axis_split(*axis).expect("axis");
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |l: usize| (o * len + l) * inner + i;
                    let gsum: f64 = (0..len).map(|l| g[idx(l)]).sum();
                    for l in 0..len {
                        dx[idx(l)] = g[idx(l)] - y[idx(l)].exp() * gsum;
                    }
                }
            }
            acc.add_data(*src, dx);
        }
        Op::LayerNorm { src, axis, gamma, beta, xhat, inv_std } => {
            let (outer, len, inner) = node.value.axis_split(*axis).expect("axis");
            let gam = gamma.map(|id| acc.value(id).data().to_vec());
            let mut dx = vec![0.0; y.len()];
            let mut dgamma = vec![0.0; len];
            let mut dbeta = vec![0.0; len];
            let mut dxhat = vec![0.0; len];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |l: usize| (o * len + l) * inner + i;
                    for l in 0..len {
                        let gi = g[idx(l)];
                        dgamma[l] += gi * xhat[idx(l)];
                        dbeta[l] += gi;
                        dxhat[l] = gi * gam.as_ref().map_or(1.0, |gm| gm[l]);
                    }
                    let mean_d: f64 = dxhat.iter().sum::<f64>() / len as f64;
                    let mean_dx: f64 = (0..len).map(|l| dxhat[l] * xhat[idx(l)]).sum::<f64>() / len as f64;
                    let s = inv_std[o * inner + i];
                    for l in 0..len {
                        dx[idx(l)] = s * (dxhat[l] - mean_d - xhat[idx(l)] * mean_dx);
                    }
                }
            }
            acc.add_data(*src, dx);
            if let Some(id) = gamma {
                acc.add_data(*id, dgamma);
            }
            if let Some(id) = beta {
                acc.add_data(*id, dbeta);
            }
        }
        Op::Dropout { src, mask } => acc.add_data(*src, g.iter().zip(mask).map(|(gi, m)| gi * m).collect()),
        Op::Embed { table, indices } => {
            let t = acc.value(*table);
            let dim = t.shape()[1];
            let mut dt = vec![0.0; t.numel()];
            for (r, &ix) in indices.iter().enumerate() {
                for c in 0..dim {
                    dt[ix * dim + c] += g[r * dim + c];
                }
            }
            acc.add_data(*table, dt);
        }
        Op::Concat { srcs, axis } => {
            let (outer, total, inner) = node.value.axis_split(*axis).expect("axis");
            let mut offset = 0;
            for &s in srcs {
                let len = acc.value(s).shape()[*axis];
                let mut d = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let start = (o * total + offset) * inner;
                    d.extend_from_slice(&g[start..start + len * inner]);
                }
                acc.add_data(s, d);
                offset += len;
            }
        }
        Op::Narrow { src, axis, start } => {
            let (outer, total, inner) = acc.value(*src).axis_split(*axis).expect("axis");
            let len = node.value.shape()[*axis];
            let mut d = vec![0.0; outer * total * inner];
            for o in 0..outer {
                let dst = (o * total + start) * inner;
                d[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            acc.add_data(*src, d);
        }
        Op::Transpose(a) => {
            let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
            let mut d = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    d[j * r + i] = g[i * c + j];
                }
            }
            acc.add_data(*a, d);
        }
        Op::GaussianSample { mu, sigma, noise } => {
            acc.add_data(*mu, g.to_vec());
            acc.add_data(*sigma, g.iter().zip(noise).map(|(gi, e)| gi * e).collect());
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Checks that `b` equals `a` or is a trailing-suffix of `a`'s shape.
fn suffix_broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa == sb || (sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb) {
        Ok(())
    } else {
        Err(shape_err(op, format!("cannot broadcast {sb:?} onto {sa:?}")))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Tensor {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.tape.inner.borrow().nodes[self.id].value.item()
    }

    fn with<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.inner.borrow().nodes[self.id].value)
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = self.with(|t| t.map(f));
        self.tape.push(value, op)
    }

    fn binary(self, other: Var<'t>, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        self.tape.check(&[self, other])?;
        let value = {
            let inner = self.tape.inner.borrow();
            let (a, b) = (&inner.nodes[self.id].value, &inner.nodes[other.id].value);
            suffix_broadcast(name, a, b)?;
            let nb = b.numel();
            let data = a.data().iter().enumerate().map(|(i, x)| f(*x, b.data()[i % nb])).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.tape.push(value, op))
    }

    /// Matrix product of two 2-D tensors.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.check(&[self, other])?;
        let value = {
            let inner = self.tape.inner.borrow();
            let (a, b) = (&inner.nodes[self.id].value, &inner.nodes[other.id].value);
            if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(shape_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
            }
            let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            Tensor::new(vec![n, m], matmul_raw(a.data(), b.data(), n, k, m, false, false))?
        };
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id)))
    }

    /// Elementwise sum; `other` may be a trailing-suffix broadcast (e.g. a bias row).
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise product with the same broadcasting rule as [`Var::add`].
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, s), |x| x * s)
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |x| x + s)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Var<'t> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    /// Sum of all entries as a scalar.
    pub fn sum(self) -> Var<'t> {
        let value = self.with(|t| Tensor::scalar(t.data().iter().sum()));
        self.tape.push(value, Op::Sum(self.id))
    }

    /// Mean of all entries as a scalar.
    pub fn mean_all(self) -> Var<'t> {
        let n = self.with(Tensor::numel) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Mean along `axis`, removing it from the shape.
    pub fn mean(self, axis: usize) -> Result<Var<'t>> {
        let value = self.with(|t| -> Result<Tensor> {
            let (outer, len, inner) = t.axis_split(axis)?;
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for l in 0..len {
                    for i in 0..inner {
                        out[o * inner + i] += t.data()[(o * len + l) * inner + i];
                    }
                }
            }
            out.iter_mut().for_each(|v| *v /= len as f64);
            let mut shape = t.shape().to_vec();
            shape.remove(axis);
            Tensor::new(shape, out)
        })?;
        Ok(self.tape.push(value, Op::Mean { src: self.id, axis }))
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let value = self.with(|t| softmax_along(t, axis, false))?;
        Ok(self.tape.push(value, Op::Softmax { src: self.id, axis }))
    }

    pub fn log_softmax(self, axis: usize) -> Result<Var<'t>> {
        let value = self.with(|t| softmax_along(t, axis, true))?;
        Ok(self.tape.push(value, Op::LogSoftmax { src: self.id, axis }))
    }

    /// Normalizes to zero mean and unit variance along `axis`, then applies
    /// the optional per-position affine `gamma * x + beta` (both of length
    /// `shape[axis]`).
    pub fn layer_norm(self, axis: usize, gamma: Option<Var<'t>>, beta: Option<Var<'t>>) -> Result<Var<'t>> {
        let affine: Vec<Var<'t>> = gamma.iter().chain(beta.iter()).copied().collect();
        self.tape.check(&affine)?;
        let (value, xhat, inv_std) = {
            let inner_ref = self.tape.inner.borrow();
            let t = &inner_ref.nodes[self.id].value;
            let (outer, len, inner) = t.axis_split(axis)?;
            let fetch = |v: Option<Var<'t>>| -> Result<Option<Vec<f64>>> {
                v.map(|v| {
                    let p = &inner_ref.nodes[v.id].value;
                    if p.numel() != len {
                        return Err(shape_err("layer_norm", format!("affine {:?} vs axis len {len}", p.shape())));
                    }
                    Ok(p.data().to_vec())
                })
                .transpose()
            };
            let (gm, bt) = (fetch(gamma)?, fetch(beta)?);
            let x = t.data();
            let mut xhat = vec![0.0; x.len()];
            let mut out = vec![0.0; x.len()];
            let mut inv_std = vec![0.0; outer * inner];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |l: usize| (o * len + l) * inner + i;
                    let mean = (0..len).map(|l| x[idx(l)]).sum::<f64>() / len as f64;
                    let var = (0..len).map(|l| (x[idx(l)] - mean).powi(2)).sum::<f64>() / len as f64;
                    let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    inv_std[o * inner + i] = s;
                    for l in 0..len {
                        let h = (x[idx(l)] - mean) * s;
                        xhat[idx(l)] = h;
                        out[idx(l)] = h * gm.as_ref().map_or(1.0, |g| g[l]) + bt.as_ref().map_or(0.0, |b| b[l]);
                    }
                }
            }
            (Tensor::new(t.shape().to_vec(), out)?, xhat, inv_std)
        };
        let op = Op::LayerNorm {
            src: self.id,
            axis,
            gamma: gamma.map(|v| v.id),
            beta: beta.map(|v| v.id),
            xhat,
            inv_std,
        };
        Ok(self.tape.push(value, op))
    }

    /// Inverted dropout: zeroes entries with probability `p` and scales the
    /// survivors by `1 / (1 - p)`. Identity when `!training` or `p == 0`.
    pub fn dropout(self, p: f64, seed: u64, training: bool) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Invalid(format!("dropout probability {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(self);
        }
        let keep = 1.0 / (1.0 - p);
        let (value, mask) = self.with(|t| {
            let mut r = rng::stream(seed, 0xd20b);
            let mask: Vec<f64> = (0..t.numel()).map(|_| if r.random::<f64>() < p { 0.0 } else { keep }).collect();
            let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
            (Tensor::new(t.shape().to_vec(), data).expect("same shape"), mask)
        });
        Ok(self.tape.push(value, Op::Dropout { src: self.id, mask }))
    }

    /// Slice `len` entries along `axis` starting at `start`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let value = self.with(|t| -> Result<Tensor> {
            let (outer, total, inner) = t.axis_split(axis)?;
            if start + len > total {
                return Err(shape_err("narrow", format!("{start}+{len} > {total}")));
            }
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let s = (o * total + start) * inner;
                data.extend_from_slice(&t.data()[s..s + len * inner]);
            }
            let mut shape = t.shape().to_vec();
            shape[axis] = len;
            Tensor::new(shape, data)
        })?;
        Ok(self.tape.push(value, Op::Narrow { src: self.id, axis, start }))
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(self) -> Result<Var<'t>> {
        let value = self.with(|t| -> Result<Tensor> {
            if t.rank() != 2 {
                return Err(shape_err("transpose", format!("rank {} tensor", t.rank())));
            }
            let (r, c) = (t.shape()[0], t.shape()[1]);
            let mut d = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    d[j * r + i] = t.data()[i * c + j];
                }
            }
            Tensor::new(vec![c, r], d)
        })?;
        Ok(self.tape.push(value, Op::Transpose(self.id)))
    }
}

fn softmax_along(t: &Tensor, axis: usize, log: bool) -> Result<Tensor> {
    let (outer, len, inner) = t.axis_split(axis)?;
    let x = t.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |l: usize| (o * len + l) * inner + i;
            let max = (0..len).map(|l| x[idx(l)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..len).map(|l| (x[idx(l)] - max).exp()).sum();
            for l in 0..len {
                out[idx(l)] = if log { x[idx(l)] - max - z.ln() } else { (x[idx(l)] - max).exp() / z };
            }
        }
    }
    Tensor::new(t.shape().to_vec(), out)
}
