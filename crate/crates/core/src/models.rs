//! Toy attacked models `F(x; W)` and the client gradient `g(x) = ∇_W F`.
//!
//! Parameters are flattened layer-major, weights before biases, each tensor
//! row-major. Weights are stored `[out, in]`; hidden layers use ReLU.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    Linear1,
    Mlp2,
    Mlp3,
    Mlp4,
    CnnTiny,
}

impl Architecture {
    pub const ZOO: [Architecture; 5] = [
        Architecture::Linear1,
        Architecture::Mlp2,
        Architecture::Mlp3,
        Architecture::Mlp4,
        Architecture::CnnTiny,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Linear1 => "linear-1",
            Architecture::Mlp2 => "mlp-2",
            Architecture::Mlp3 => "mlp-3",
            Architecture::Mlp4 => "mlp-4",
            Architecture::CnnTiny => "cnn-tiny",
        }
    }

    fn hidden_widths(self) -> &'static [usize] {
        match self {
            Architecture::Linear1 | Architecture::CnnTiny => &[],
            Architecture::Mlp2 => &[32],
            Architecture::Mlp3 => &[32, 16],
            Architecture::Mlp4 => &[48, 32, 16],
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ZOO
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "model spec",
                name: s.to_string(),
            })
    }
}

/// Convolution geometry of `cnn-tiny`: one 3×3 valid convolution.
const CONV_CHANNELS: usize = 4;
const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientLoss {
    /// Softmax cross-entropy against a class index.
    CrossEntropy,
    /// `½‖F(x) − y‖²` against a target vector.
    HalfSquaredError,
    /// `yᵀF(x)`, linear in the model output; with `linear-1` the client
    /// gradient is affine in `x`.
    OutputProjection,
}

impl ClientLoss {
    pub fn name(self) -> &'static str {
        match self {
            ClientLoss::CrossEntropy => "cross-entropy",
            ClientLoss::HalfSquaredError => "half-squared-error",
            ClientLoss::OutputProjection => "output-projection",
        }
    }
}

impl FromStr for ClientLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-entropy" | "softmax-cross-entropy" => Ok(ClientLoss::CrossEntropy),
            "half-squared-error" => Ok(ClientLoss::HalfSquaredError),
            "output-projection" => Ok(ClientLoss::OutputProjection),
            _ => Err(Error::Unknown {
                kind: "client loss",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(usize),
    Target(Tensor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn new(arch: Architecture, input_dim: usize, num_classes: usize) -> Self {
        Self {
            arch,
            input_dim,
            num_classes,
        }
    }

    fn image_side(&self) -> Result<usize> {
        let side = (self.input_dim as f64).sqrt().round() as usize;
        if side * side != self.input_dim || side < KERNEL {
            return Err(Error::invalid(format!(
                "cnn-tiny needs a square input of side >= {KERNEL}, got dimension {}",
                self.input_dim
            )));
        }
        Ok(side)
    }

    /// Names and shapes of all parameter tensors in flattening order.
    pub fn param_layout(&self) -> Result<Vec<(String, Vec<usize>)>> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::invalid("input dimension and class count must be positive"));
        }
        let mut layout = Vec::new();
        match self.arch {
            Architecture::CnnTiny => {
                let side = self.image_side()?;
                let out_side = side - KERNEL + 1;
                layout.push(("conv.weight".into(), vec![CONV_CHANNELS, KERNEL * KERNEL]));
                layout.push(("conv.bias".into(), vec![CONV_CHANNELS]));
                let flat = out_side * out_side * CONV_CHANNELS;
                layout.push(("dense.weight".into(), vec![self.num_classes, flat]));
                layout.push(("dense.bias".into(), vec![self.num_classes]));
            }
            arch => {
                let mut widths = vec![self.input_dim];
                widths.extend_from_slice(arch.hidden_widths());
                widths.push(self.num_classes);
                for (i, w) in widths.windows(2).enumerate() {
                    layout.push((format!("layer{i}.weight"), vec![w[1], w[0]]));
                    layout.push((format!("layer{i}.bias"), vec![w[1]]));
                }
            }
        }
        Ok(layout)
    }
}

/// Where the leaked gradient came from and what was done to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    None,
    Gaussian,
    Laplacian,
}

impl Perturbation {
    pub fn name(self) -> &'static str {
        match self {
            Perturbation::None => "none",
            Perturbation::Gaussian => "gaussian",
            Perturbation::Laplacian => "laplacian",
        }
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Perturbation::None),
            "gaussian" => Ok(Perturbation::Gaussian),
            "laplacian" => Ok(Perturbation::Laplacian),
            _ => Err(Error::Unknown {
                kind: "defense",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientMeta {
    pub model_id: String,
    pub perturbation: Perturbation,
    pub variance: f64,
    pub batch_size: usize,
}

/// A flattened client gradient as seen by the attacker.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakedGradient {
    pub values: Tensor,
    pub meta: GradientMeta,
}

impl LeakedGradient {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct AttackedModel {
    spec: ModelSpec,
    loss: ClientLoss,
    label: Label,
    params: Vec<(String, Tensor)>,
    /// 0/1 gather matrix mapping the image to its 3×3 patches (cnn-tiny).
    im2col: Option<Tensor>,
}

impl AttackedModel {
    /// Gaussian initialization with std `1/√fan_in` for weights and biases.
    pub fn build(spec: ModelSpec, loss: ClientLoss, label: Label, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let layout = spec.param_layout()?;
        let mut params = Vec::with_capacity(layout.len());
        let mut fan_in = 1;
        for (name, shape) in layout {
            if name.ends_with("weight") {
                fan_in = shape[1];
            }
            let std = 1.0 / (fan_in as f64).sqrt();
            let t = rng.normal_tensor(&shape).scale(std);
            params.push((name, t));
        }
        Self::with_params(spec, loss, label, params)
    }

    pub fn with_params(
        spec: ModelSpec,
        loss: ClientLoss,
        label: Label,
        params: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        let layout = spec.param_layout()?;
        if layout.len() != params.len() {
            return Err(Error::invalid(format!(
                "{} expects {} parameter tensors, got {}",
                spec.arch,
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), (pname, t)) in layout.iter().zip(&params) {
            if name != pname {
                return Err(Error::invalid(format!("expected parameter `{name}`, got `{pname}`")));
            }
            if shape.as_slice() != t.shape() {
                return Err(Error::ShapeMismatch {
                    op: "parameter layout",
                    lhs: shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        let im2col = match spec.arch {
            Architecture::CnnTiny => Some(im2col_matrix(spec.image_side()?)),
            _ => None,
        };
        let model = Self {
            spec,
            loss,
            label,
            params,
            im2col,
        };
        model.check_label(&model.label)?;
        Ok(model)
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn arch(&self) -> Architecture {
        self.spec.arch
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn loss(&self) -> ClientLoss {
        self.loss
    }

    pub fn label(&self) -> &Label {
        &self.label
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn id(&self) -> String {
        format!(
            "{}-n{}-c{}",
            self.spec.arch, self.spec.input_dim, self.spec.num_classes
        )
    }

    /// A copy of this model that trains against a different label.
    pub fn relabeled(&self, label: Label) -> Result<Self> {
        self.check_label(&label)?;
        let mut m = self.clone();
        m.label = label;
        Ok(m)
    }

    fn check_label(&self, label: &Label) -> Result<()> {
        match (self.loss, label) {
            (ClientLoss::CrossEntropy, Label::Class(c)) if *c < self.spec.num_classes => Ok(()),
            (ClientLoss::HalfSquaredError | ClientLoss::OutputProjection, Label::Target(t))
                if t.len() == self.spec.num_classes =>
            {
                Ok(())
            }
            _ => Err(Error::invalid(format!(
                "label {label:?} invalid for {} with {} outputs",
                self.loss.name(),
                self.spec.num_classes
            ))),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let len: usize = shape.iter().product();
        if len != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "model input",
                lhs: vec![self.spec.input_dim],
                rhs: shape.to_vec(),
            });
        }
        Ok(())
    }

    /// Records the parameters as graph leaves.
    pub fn param_leaves(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|(_, t)| g.leaf(t.clone())).collect()
    }

    /// Logits (model outputs) as a `[classes, 1]` node.
    pub fn forward(&self, g: &mut Graph, x: Var, params: &[Var]) -> Result<Var> {
        self.check_input(g.shape(x))?;
        let n = self.spec.input_dim;
        let col = g.reshape(x, &[n, 1])?;
        match self.spec.arch {
            Architecture::CnnTiny => {
                let gather = g.constant(self.im2col.clone().expect("cnn has im2col"));
                let patches = g.matmul(gather, col)?;
                let positions = g.value(patches).len() / (KERNEL * KERNEL);
                let patches = g.reshape(patches, &[positions, KERNEL * KERNEL])?;
                let kt = g.transpose(params[0])?;
                let conv = g.matmul(patches, kt)?;
                let ones = g.constant(Tensor::full(&[positions, 1], 1.0));
                let bias = g.reshape(params[1], &[1, CONV_CHANNELS])?;
                let bias = g.matmul(ones, bias)?;
                let conv = g.add(conv, bias)?;
                let act = g.relu(conv)?;
                let flat = g.reshape(act, &[positions * CONV_CHANNELS, 1])?;
                self.dense(g, flat, params[2], params[3])
            }
            _ => {
                let layers = params.len() / 2;
                let mut h = col;
                for l in 0..layers {
                    h = self.dense(g, h, params[2 * l], params[2 * l + 1])?;
                    if l + 1 < layers {
                        h = g.relu(h)?;
                    }
                }
                Ok(h)
            }
        }
    }

    fn dense(&self, g: &mut Graph, h: Var, w: Var, b: Var) -> Result<Var> {
        let out = g.shape(w)[0];
        let z = g.matmul(w, h)?;
        let b = g.reshape(b, &[out, 1])?;
        g.add(z, b)
    }

    /// Scalar client loss at `x` for `label`.
    pub fn client_loss(&self, g: &mut Graph, x: Var, params: &[Var], label: &Label) -> Result<Var> {
        self.check_label(label)?;
        let logits = self.forward(g, x, params)?;
        let c = self.spec.num_classes;
        match (self.loss, label) {
            (ClientLoss::CrossEntropy, Label::Class(k)) => g.softmax_cross_entropy(logits, *k),
            (ClientLoss::HalfSquaredError, Label::Target(y)) => {
                let y = g.constant(y.reshaped(&[c, 1])?);
                let r = g.sub(logits, y)?;
                let sq = g.square(r)?;
                let s = g.sum(sq)?;
                g.scale(s, 0.5)
            }
            (ClientLoss::OutputProjection, Label::Target(y)) => {
                let y = g.constant(y.reshaped(&[c, 1])?);
                let p = g.mul(logits, y)?;
                g.sum(p)
            }
            _ => unreachable!("label checked above"),
        }
    }

    /// The flattened client gradient `∇_W L(F(x; W), label)` as a graph
    /// node that stays differentiable with respect to `x`.
    pub fn gradient_node(&self, g: &mut Graph, x: Var, label: &Label) -> Result<Var> {
        let params = self.param_leaves(g);
        let loss = self.client_loss(g, x, &params, label)?;
        let grads = g.backward_graph(loss, &params)?;
        let mut flat = Vec::with_capacity(grads.len());
        for gr in grads {
            let len = g.value(gr).len();
            flat.push(g.reshape(gr, &[len])?);
        }
        g.concat(&flat, 0)
    }

    /// `vᵀ g(x)` as a differentiable scalar.
    pub fn projected_gradient(&self, g: &mut Graph, x: Var, label: &Label, v: &Tensor) -> Result<Var> {
        if v.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                op: "projected_gradient",
                lhs: vec![self.param_count()],
                rhs: v.shape().to_vec(),
            });
        }
        let grad = self.gradient_node(g, x, label)?;
        let v = g.constant(v.reshaped(&[v.len()])?);
        let p = g.mul(grad, v)?;
        g.sum(p)
    }

    /// `∇_x (vᵀ g(x))` evaluated at `x`.
    pub fn projected_gradient_input_grad(&self, x: &Tensor, label: &Label, v: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let s = self.projected_gradient(&mut g, xv, label, v)?;
        Ok(g.backward(s, &[xv])?.remove(0))
    }

    /// Mixed derivative `∂g/∂x` at `x` as a `[P, n]` matrix, one column per
    /// input coordinate. Built from `h(u) = ∇_x(uᵀg)`, which is linear in
    /// `u`, so column `k` is `∇_u h_k`.
    pub fn input_jacobian(&self, x: &Tensor, label: &Label) -> Result<Tensor> {
        self.check_input(x.shape())?;
        let n = x.len();
        let p = self.param_count();
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let u = g.leaf(Tensor::zeros(&[p]));
        let grad = self.gradient_node(&mut g, xv, label)?;
        let prod = g.mul(grad, u)?;
        let s = g.sum(prod)?;
        let h = g.backward_graph(s, &[xv])?.remove(0);
        let h = g.reshape(h, &[n])?;
        let mut jac = vec![0.0; p * n];
        let mark = g.len();
        for k in 0..n {
            let hk = g.narrow(h, 0, k, 1)?;
            let hk = g.sum(hk)?;
            let col = g.backward(hk, &[u])?.remove(0);
            for (row, v) in col.data().iter().enumerate() {
                jac[row * n + k] = *v;
            }
            g.truncate(mark);
        }
        Tensor::matrix(p, n, jac)
    }

    /// The client gradient at `x` for `label`, unperturbed.
    pub fn client_gradient(&self, x: &Tensor, label: &Label) -> Result<LeakedGradient> {
        self.check_input(x.shape())?;
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let params = self.param_leaves(&mut g);
        let loss = self.client_loss(&mut g, xv, &params, label)?;
        let grads = g.backward(loss, &params)?;
        let values: Vec<f64> = grads.into_iter().flat_map(Tensor::into_data).collect();
        Ok(LeakedGradient {
            values: Tensor::vector(values),
            meta: GradientMeta {
                model_id: self.id(),
                perturbation: Perturbation::None,
                variance: 0.0,
                batch_size: 1,
            },
        })
    }

    /// Mean of per-sample client gradients.
    pub fn batch_gradient(&self, xs: &[Tensor], labels: &[Label]) -> Result<LeakedGradient> {
        if xs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if xs.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} labels",
                xs.len(),
                labels.len()
            )));
        }
        let mut acc = vec![0.0; self.param_count()];
        for (x, y) in xs.iter().zip(labels) {
            let gr = self.client_gradient(x, y)?;
            for (a, v) in acc.iter_mut().zip(gr.values.data()) {
                *a += v;
            }
        }
        let scale = 1.0 / xs.len() as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        Ok(LeakedGradient {
            values: Tensor::vector(acc),
            meta: GradientMeta {
                model_id: self.id(),
                perturbation: Perturbation::None,
                variance: 0.0,
                batch_size: xs.len(),
            },
        })
    }

    pub fn to_checkpoint(&self) -> String {
        crate::checkpoint::to_text(&self.params)
    }
}

/// `[positions * 9, side * side]` selection matrix for 3×3 valid patches.
fn im2col_matrix(side: usize) -> Tensor {
    let out = side - KERNEL + 1;
    let n = side * side;
    let rows = out * out * KERNEL * KERNEL;
    let mut data = vec![0.0; rows * n];
    for r in 0..out {
        for c in 0..out {
            let pos = r * out + c;
            for kr in 0..KERNEL {
                for kc in 0..KERNEL {
                    let row = pos * KERNEL * KERNEL + kr * KERNEL + kc;
                    let pixel = (r + kr) * side + (c + kc);
                    data[row * n + pixel] = 1.0;
                }
            }
        }
    }
    Tensor::matrix(rows, n, data).expect("im2col shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::relative_error;

    fn linear_identity() -> AttackedModel {
        let spec = ModelSpec::new(Architecture::Linear1, 2, 2);
        AttackedModel::with_params(
            spec,
            ClientLoss::HalfSquaredError,
            Label::Target(Tensor::vector(vec![0.0, 0.0])),
            vec![
                ("layer0.weight".into(), Tensor::identity(2)),
                ("layer0.bias".into(), Tensor::zeros(&[2])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn linear_param_count() {
        let spec = ModelSpec::new(Architecture::Linear1, 4, 2);
        let m = AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(0), 0).unwrap();
        assert_eq!(m.param_count(), 10);
    }

    #[test]
    fn mlp3_param_count() {
        let spec = ModelSpec::new(Architecture::Mlp3, 64, 10);
        let m = AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(0), 0).unwrap();
        let widths = [64, 32, 16, 10];
        let expected: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        assert_eq!(m.param_count(), expected);
    }

    #[test]
    fn cnn_param_count() {
        let spec = ModelSpec::new(Architecture::CnnTiny, 64, 10);
        let m = AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(3), 0).unwrap();
        assert_eq!(m.param_count(), 4 * 9 + 4 + 10 * 144 + 10);
    }

    #[test]
    fn build_is_deterministic() {
        let spec = ModelSpec::new(Architecture::Mlp2, 16, 3);
        let a = AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(1), 5).unwrap();
        let b = AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(1), 5).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn unknown_spec_name() {
        assert!("resnet-18".parse::<Architecture>().is_err());
        assert_eq!("mlp-4".parse::<Architecture>().unwrap(), Architecture::Mlp4);
    }

    #[test]
    fn cnn_rejects_non_square_input() {
        let spec = ModelSpec::new(Architecture::CnnTiny, 10, 2);
        assert!(AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(0), 0).is_err());
    }

    #[test]
    fn closed_form_linear_gradient() {
        let m = linear_identity();
        let x = Tensor::vector(vec![1.0, 0.0]);
        let g = m.client_gradient(&x, m.label()).unwrap();
        // (Wx - y) xᵀ = [[1, 0], [0, 0]], bias term (Wx - y) = (1, 0).
        assert_eq!(&g.values.data()[..4], &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&g.values.data()[4..], &[1.0, 0.0]);
    }

    #[test]
    fn gradient_vanishes_at_minimum() {
        let m = linear_identity();
        let x = Tensor::vector(vec![0.7, -0.3]);
        let at_min = m
            .relabeled(Label::Target(Tensor::vector(vec![0.7, -0.3])))
            .unwrap();
        let g = at_min.client_gradient(&x, at_min.label()).unwrap();
        assert!(g.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let m = linear_identity();
        assert!(m.client_gradient(&Tensor::vector(vec![1.0; 3]), m.label()).is_err());
        assert!(m.batch_gradient(&[], &[]).is_err());
    }

    #[test]
    fn label_validation() {
        let spec = ModelSpec::new(Architecture::Linear1, 2, 2);
        assert!(AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(2), 0).is_err());
        assert!(AttackedModel::build(
            spec,
            ClientLoss::HalfSquaredError,
            Label::Class(0),
            0
        )
        .is_err());
    }

    #[test]
    fn batch_of_one_equals_single() {
        let spec = ModelSpec::new(Architecture::Mlp2, 9, 3);
        let m = AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(2), 1).unwrap();
        let mut rng = SeededRng::new(2);
        let x = rng.normal_tensor(&[9]);
        let single = m.client_gradient(&x, m.label()).unwrap();
        let batch = m.batch_gradient(&[x.clone()], &[m.label().clone()]).unwrap();
        assert_eq!(single.values, batch.values);
        let twice = m
            .batch_gradient(&[x.clone(), x], &[m.label().clone(), m.label().clone()])
            .unwrap();
        assert!(relative_error(single.values.data(), twice.values.data()) < 1e-15);
        assert_eq!(twice.meta.batch_size, 2);
    }

    #[test]
    fn projection_basics() {
        let spec = ModelSpec::new(Architecture::Mlp2, 4, 2);
        let m = AttackedModel::build(spec, ClientLoss::CrossEntropy, Label::Class(0), 3).unwrap();
        let x = Tensor::vector(vec![0.1, 0.2, -0.3, 0.4]);
        let full = m.client_gradient(&x, m.label()).unwrap();
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let zero = Tensor::zeros(&[m.param_count()]);
        let p = m.projected_gradient(&mut g, xv, m.label(), &zero).unwrap();
        assert_eq!(g.value(p).item(), 0.0);
        let mut e = Tensor::zeros(&[m.param_count()]);
        e.data_mut()[7] = 1.0;
        let p = m.projected_gradient(&mut g, xv, m.label(), &e).unwrap();
        assert!((g.value(p).item() - full.values.data()[7]).abs() < 1e-15);
        let short = Tensor::zeros(&[3]);
        assert!(m.projected_gradient(&mut g, xv, m.label(), &short).is_err());
    }
}
