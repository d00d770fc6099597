//! Reverse-mode automatic differentiation with differentiable backward passes.
//!
//! A [`Graph`] is an append-only arena of nodes. Every op evaluates eagerly
//! when it is recorded, so node indices are already a topological order and
//! the cached forward value of any node is available immediately.
//!
//! The backward pass is written in terms of the same ops: each adjoint is a
//! new node in the graph. [`Graph::backward_graph`] keeps those nodes, so the
//! returned gradients can be differentiated again (Hessian-vector products,
//! gradients of gradient-matching losses). [`Graph::backward`] discards them
//! after reading the values.
//!
//! Broadcasting is limited to [`Graph::expand`], which tiles a one-element
//! tensor to a shape.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Relu(Var),
    Sigmoid(Var),
    Silu(Var),
    Sum(Var),
    Mean(Var),
    Expand(Var),
    Norm(Var),
    Square(Var),
    Sqrt(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    SoftmaxCrossEntropy(Var, usize),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Narrow { src: Var, axis: usize, start: usize },
    Pad { src: Var, axis: usize, start: usize },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => vec![*a, *b],
            Scale(a, _) | AddConst(a) | Transpose(a) | Relu(a) | Sigmoid(a) | Silu(a)
            | Sum(a) | Mean(a) | Expand(a) | Norm(a) | Square(a) | Sqrt(a) | Exp(a) | Log(a)
            | Softmax(a) | SoftmaxCrossEntropy(a, _) | Reshape(a) => vec![*a],
            Concat(parts, _) => parts.clone(),
            Narrow { src, .. } | Pad { src, .. } => vec![*src],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Computation graph. Single-threaded; independent graphs share nothing.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Splits `shape` around `axis` into (outer, axis_len, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * p];
    // SAFETY: slices have exactly m*k, k*p and m*p elements with row-major strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            p,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            p as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            p as isize,
            1,
        );
    }
    c
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Forward value of `v`. Values are computed when nodes are recorded,
    /// so this is a lookup.
    pub fn evaluate(&self, v: Var) -> Tensor {
        self.nodes[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, "leaf")
            .expect("leaf tensors must be finite")
    }

    /// A leaf that is not meant to be differentiated. Identical to
    /// [`Graph::leaf`]; the distinction is documentary.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let value = self.value(a).zip_map(self.value(b), f);
        self.push(op, value, name)
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let value = self.value(a).map(f);
        self.push(op, value, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, Op::Scale(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_const", a, Op::AddConst(a), |x| x + c)
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, p) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, p);
        let value = Tensor::new(vec![m, p], data)?;
        self.push(Op::MatMul(a, b), value, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::InvalidShape {
                what: "transpose",
                shape: s.to_vec(),
            });
        }
        let (r, c) = (s[0], s[1]);
        let src = self.value(a).data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], data)?;
        self.push(Op::Transpose(a), value, "transpose")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.unary("silu", a, Op::Silu(a), |x| x * sigmoid(x))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), value, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(Op::Mean(a), value, "mean")
    }

    /// Tiles a one-element tensor to `shape`.
    pub fn expand(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if !self.value(a).is_scalar() {
            return Err(Error::InvalidShape {
                what: "expand source",
                shape: self.shape(a).to_vec(),
            });
        }
        let value = Tensor::full(shape, self.value(a).item());
        if value.is_empty() {
            return Err(Error::InvalidShape {
                what: "expand target",
                shape: shape.to_vec(),
            });
        }
        self.push(Op::Expand(a), value, "expand")
    }

    /// Euclidean norm over all entries. Its gradient at the origin is taken
    /// to be zero.
    pub fn norm(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).norm());
        self.push(Op::Norm(a), value, "norm")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary("sqrt", a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, Op::Log(a), f64::ln)
    }

    /// Softmax over all entries of `a`.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let value = Tensor::new(t.shape().to_vec(), softmax(t.data()))?;
        self.push(Op::Softmax(a), value, "softmax")
    }

    /// `logsumexp(z) - z[label]` for a logit tensor `z` (all entries).
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = self.value(logits).data();
        if label >= z.len() {
            return Err(Error::invalid(format!(
                "label {label} out of range for {} logits",
                z.len()
            )));
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let value = Tensor::scalar(lse - z[label]);
        self.push(
            Op::SoftmaxCrossEntropy(logits, label),
            value,
            "softmax_cross_entropy",
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape).map_err(|_| Error::ShapeMismatch {
            op: "reshape",
            lhs: self.shape(a).to_vec(),
            rhs: shape.to_vec(),
        })?;
        self.push(Op::Reshape(a), value, "reshape")
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidShape {
                what: "concat axis",
                shape: base,
            });
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_extents(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * len..(o + 1) * len]);
            }
        }
        let value = Tensor::new(shape, data)?;
        self.push(Op::Concat(parts.to_vec(), axis), value, "concat")
    }

    /// The sub-tensor `start..start + len` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::InvalidShape {
                what: "narrow range",
                shape: s,
            });
        }
        let (outer, full, inner) = axis_extents(&s, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let value = Tensor::new(shape, data)?;
        self.push(Op::Narrow { src: a, axis, start }, value, "narrow")
    }

    /// Zero-pads `a` along `axis` to extent `total`, placing it at `start`.
    /// Adjoint of [`Graph::narrow`].
    pub fn pad(&mut self, a: Var, axis: usize, start: usize, total: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || start + s[axis] > total {
            return Err(Error::InvalidShape {
                what: "pad range",
                shape: s,
            });
        }
        let (outer, len, inner) = axis_extents(&s, axis);
        let src = self.value(a).data();
        let mut shape = s.clone();
        shape[axis] = total;
        let mut data = vec![0.0; outer * total * inner];
        for o in 0..outer {
            let dst = o * total * inner + start * inner;
            data[dst..dst + len * inner].copy_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
        }
        let value = Tensor::new(shape, data)?;
        self.push(Op::Pad { src: a, axis, start }, value, "pad")
    }

    /// Drops every node created at or after index `len`.
    pub(crate) fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Gradients of a one-element `root` with respect to each of `wrt`.
    /// Nodes that do not influence `root` get exact zeros. The graph is left
    /// as it was before the call.
    pub fn backward(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let mark = self.nodes.len();
        let adjoints = self.adjoints(root, wrt);
        let out = adjoints.map(|adj| {
            adj.into_iter()
                .zip(wrt)
                .map(|(a, &w)| match a {
                    Some(a) => self.value(a).clone(),
                    None => Tensor::zeros(self.shape(w)),
                })
                .collect()
        });
        self.nodes.truncate(mark);
        out
    }

    /// Like [`Graph::backward`], but returns the gradients as graph nodes
    /// that can themselves be differentiated.
    pub fn backward_graph(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let adjoints = self.adjoints(root, wrt)?;
        Ok(adjoints
            .into_iter()
            .zip(wrt)
            .map(|(a, &w)| a.unwrap_or_else(|| self.constant(Tensor::zeros(self.shape(w)))))
            .collect())
    }

    fn adjoints(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Option<Var>>> {
        if !self.value(root).is_scalar() {
            return Err(Error::NonScalarRoot(self.shape(root).to_vec()));
        }
        let n = root.0 + 1;
        // A node needs an adjoint only if some target lies upstream of it.
        let mut depends = vec![false; n];
        for &w in wrt {
            if w.0 < n {
                depends[w.0] = true;
            }
        }
        for i in 0..n {
            if !depends[i] && self.nodes[i].op.parents().iter().any(|p| depends[p.0]) {
                depends[i] = true;
            }
        }
        let mut adj: Vec<Option<Var>> = vec![None; n];
        if depends[root.0] {
            let seed = Tensor::full(self.shape(root), 1.0);
            adj[root.0] = Some(self.constant(seed));
        }
        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            if !depends[i] {
                continue;
            }
            for (parent, contrib) in self.vjp(i, g, &depends)? {
                adj[parent.0] = Some(match adj[parent.0] {
                    None => contrib,
                    Some(prev) => self.add(prev, contrib)?,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| if w.0 < n { adj[w.0] } else { None })
            .collect())
    }

    /// Vector-Jacobian contributions of node `i` to its parents, as nodes.
    fn vjp(&mut self, i: usize, g: Var, need: &[bool]) -> Result<Vec<(Var, Var)>> {
        let out = Var(i);
        let op = self.nodes[i].op.clone();
        let mut contribs = Vec::with_capacity(2);
        let wants = |v: Var| need[v.0];
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(a) {
                    contribs.push((a, g));
                }
                if wants(b) {
                    contribs.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    contribs.push((a, g));
                }
                if wants(b) {
                    contribs.push((b, self.neg(g)?));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    contribs.push((a, self.mul(g, b)?));
                }
                if wants(b) {
                    contribs.push((b, self.mul(g, a)?));
                }
            }
            Op::Div(a, b) => {
                if wants(a) {
                    contribs.push((a, self.div(g, b)?));
                }
                if wants(b) {
                    let gy = self.mul(g, out)?;
                    let q = self.div(gy, b)?;
                    contribs.push((b, self.neg(q)?));
                }
            }
            Op::Scale(a, c) => contribs.push((a, self.scale(g, c)?)),
            Op::AddConst(a) => contribs.push((a, g)),
            Op::MatMul(a, b) => {
                if wants(a) {
                    let bt = self.transpose(b)?;
                    contribs.push((a, self.matmul(g, bt)?));
                }
                if wants(b) {
                    let at = self.transpose(a)?;
                    contribs.push((b, self.matmul(at, g)?));
                }
            }
            Op::Transpose(a) => contribs.push((a, self.transpose(g)?)),
            Op::Relu(a) => {
                let mask = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                contribs.push((a, self.mul(g, mask)?));
            }
            Op::Sigmoid(a) => {
                let one_minus = self.scale(out, -1.0)?;
                let one_minus = self.add_const(one_minus, 1.0)?;
                let d = self.mul(out, one_minus)?;
                contribs.push((a, self.mul(g, d)?));
            }
            Op::Silu(a) => {
                // d/dx x*s(x) = s * (1 + x * (1 - s))
                let s = self.sigmoid(a)?;
                let one_minus = self.scale(s, -1.0)?;
                let one_minus = self.add_const(one_minus, 1.0)?;
                let inner = self.mul(a, one_minus)?;
                let inner = self.add_const(inner, 1.0)?;
                let d = self.mul(s, inner)?;
                contribs.push((a, self.mul(g, d)?));
            }
            Op::Sum(a) => {
                let shape = self.shape(a).to_vec();
                contribs.push((a, self.expand(g, &shape)?));
            }
            Op::Mean(a) => {
                let shape = self.shape(a).to_vec();
                let count = self.value(a).len() as f64;
                let e = self.expand(g, &shape)?;
                contribs.push((a, self.scale(e, 1.0 / count)?));
            }
            Op::Expand(a) => {
                let s = self.sum(g)?;
                let shape = self.shape(a).to_vec();
                contribs.push((a, self.reshape(s, &shape)?));
            }
            Op::Norm(a) => {
                if self.value(out).item() > 0.0 {
                    let q = self.div(g, out)?;
                    let shape = self.shape(a).to_vec();
                    let e = self.expand(q, &shape)?;
                    contribs.push((a, self.mul(e, a)?));
                }
            }
            Op::Square(a) => {
                let two_a = self.scale(a, 2.0)?;
                contribs.push((a, self.mul(g, two_a)?));
            }
            Op::Sqrt(a) => {
                let q = self.div(g, out)?;
                contribs.push((a, self.scale(q, 0.5)?));
            }
            Op::Exp(a) => contribs.push((a, self.mul(g, out)?)),
            Op::Log(a) => contribs.push((a, self.div(g, a)?)),
            Op::Softmax(a) => {
                // s * (g - <g, s>)
                let gs = self.mul(g, out)?;
                let dot = self.sum(gs)?;
                let shape = self.shape(a).to_vec();
                let dot = self.expand(dot, &shape)?;
                let centered = self.sub(g, dot)?;
                contribs.push((a, self.mul(out, centered)?));
            }
            Op::SoftmaxCrossEntropy(z, label) => {
                let shape = self.shape(z).to_vec();
                let probs = self.softmax(z)?;
                let mut onehot = Tensor::zeros(&shape);
                onehot.data_mut()[label] = 1.0;
                let onehot = self.constant(onehot);
                let diff = self.sub(probs, onehot)?;
                let e = self.expand(g, &shape)?;
                contribs.push((z, self.mul(e, diff)?));
            }
            Op::Reshape(a) => {
                let shape = self.shape(a).to_vec();
                contribs.push((a, self.reshape(g, &shape)?));
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.shape(p)[axis];
                    if wants(p) {
                        contribs.push((p, self.narrow(g, axis, offset, len)?));
                    }
                    offset += len;
                }
            }
            Op::Narrow { src, axis, start } => {
                let total = self.shape(src)[axis];
                contribs.push((src, self.pad(g, axis, start, total)?));
            }
            Op::Pad { src, axis, start } => {
                let len = self.shape(src)[axis];
                contribs.push((src, self.narrow(g, axis, start, len)?));
            }
        }
        Ok(contribs)
    }
}

/// Maximum relative error between the reverse-mode gradient of `f` at
/// `point` and a central finite-difference estimate with step `eps`.
///
/// The error is `max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|)`, i.e.
/// normalized by the gradient scale; it is 0 when both gradients vanish.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::invalid(format!("eps {eps} outside (0, 1e-2]")));
    }
    let mut g = Graph::new();
    let x = g.leaf(point.clone());
    let y = f(&mut g, x)?;
    let analytic = g.backward(y, &[x])?.remove(0);

    let eval = |p: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.leaf(p);
        let y = f(&mut g, x)?;
        if !g.value(y).is_scalar() {
            return Err(Error::NonScalarRoot(g.shape(y).to_vec()));
        }
        Ok(g.value(y).item())
    };
    let mut numeric = Tensor::zeros(point.shape());
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        numeric.data_mut()[i] = (eval(plus)? - eval(minus)?) / (2.0 * eps);
    }
    Ok(relative_error(analytic.data(), numeric.data()))
}

/// `max |a - b| / max(|a|_inf, |b|_inf)`, 0 when both are zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a
        .iter()
        .chain(b)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}
