//! Reconstruction vulnerability: how strongly the shared gradient reacts to
//! the input, `E_x E_v ‖∇_x(vᵀ∇_W F(x; W))‖` over random unit directions `v`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::autodiff::matmul_raw;
use crate::error::{Error, Result};
use crate::models::{Architecture, AttackedModel, ClientLoss, Label};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const DEFAULT_DIRECTIONS: usize = 1000;
pub const DEFAULT_SAMPLES: usize = 310;

/// `M` unit directions in parameter space, stored row-major `[M, P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub rows: Tensor,
    /// Whether the rows are mutually orthogonal.
    pub orthogonal: bool,
}

impl Directions {
    pub fn count(&self) -> usize {
        self.rows.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let p = self.dim();
        &self.rows.data()[j * p..(j + 1) * p]
    }
}

/// Orthonormal rows from the QR factorization of a Gaussian matrix when
/// `m ≤ p`; otherwise i.i.d. normalized Gaussians.
pub fn draw_directions(p: usize, m: usize, rng: &mut SeededRng) -> Result<Directions> {
    if p == 0 || m == 0 {
        return Err(Error::invalid("direction count and dimension must be positive"));
    }
    if m > p {
        let mut rows = Vec::with_capacity(m * p);
        for _ in 0..m {
            rows.extend(rng.unit_sphere(p));
        }
        return Ok(Directions {
            rows: Tensor::matrix(m, p, rows)?,
            orthogonal: false,
        });
    }
    // column-major fill, p × m
    let gauss: Vec<f64> = (0..p * m).map(|_| rng.normal()).collect();
    let q = DMatrix::from_vec(p, m, gauss).qr().q();
    let mut rows = Vec::with_capacity(m * p);
    for j in 0..m {
        rows.extend(q.column(j).iter());
    }
    Ok(Directions {
        rows: Tensor::matrix(m, p, rows)?,
        orthogonal: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RVEstimate {
    pub value: f64,
    pub m: usize,
    pub n: usize,
    /// Standard error of the mean over the `N·M` terms.
    pub stderr: f64,
    pub orthogonal: bool,
}

/// `‖J_iᵀ v_j‖` for every sample `i` and direction `j`, sample-major.
pub fn rv_terms(
    model: &AttackedModel,
    inputs: &[Tensor],
    labels: &[Label],
    dirs: &Directions,
) -> Result<Vec<f64>> {
    if inputs.len() != labels.len() {
        return Err(Error::invalid("inputs and labels differ in length"));
    }
    if dirs.dim() != model.param_count() {
        return Err(Error::invalid(format!(
            "directions have dimension {}, model has {} parameters",
            dirs.dim(),
            model.param_count()
        )));
    }
    let m = dirs.count();
    let p = dirs.dim();
    let mut terms = Vec::with_capacity(inputs.len() * m);
    for (x, y) in inputs.iter().zip(labels) {
        let jac = model.input_jacobian(x, y)?;
        let n = jac.shape()[1];
        let proj = matmul_raw(dirs.rows.data(), jac.data(), m, p, n);
        terms.extend(proj.chunks(n).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()));
    }
    Ok(terms)
}

fn summarize(terms: &[f64], m: usize, n: usize, orthogonal: bool) -> RVEstimate {
    let count = terms.len() as f64;
    let value = terms.iter().sum::<f64>() / count;
    let stderr = if terms.len() > 1 {
        let var = terms.iter().map(|t| (t - value).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    RVEstimate {
        value,
        m,
        n,
        stderr,
        orthogonal,
    }
}

pub fn estimate_rv_with_directions(
    model: &AttackedModel,
    inputs: &[Tensor],
    labels: &[Label],
    dirs: &Directions,
) -> Result<RVEstimate> {
    if inputs.is_empty() {
        return Err(Error::invalid("rv needs at least one sample"));
    }
    let terms = rv_terms(model, inputs, labels, dirs)?;
    Ok(summarize(&terms, dirs.count(), inputs.len(), dirs.orthogonal))
}

/// Monte-Carlo estimate over the first `n` samples and `m` random directions.
pub fn estimate_rv(
    model: &AttackedModel,
    dataset: &[Tensor],
    labels: &[Label],
    m: usize,
    n: usize,
    rng: &mut SeededRng,
) -> Result<RVEstimate> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("M and N must be at least 1"));
    }
    if n > dataset.len() || n > labels.len() {
        return Err(Error::invalid(format!(
            "N = {n} exceeds the dataset size {}",
            dataset.len().min(labels.len())
        )));
    }
    let dirs = draw_directions(model.param_count(), m, rng)?;
    estimate_rv_with_directions(model, &dataset[..n], &labels[..n], &dirs)
}

fn linear_parts(model: &AttackedModel) -> Result<(&Tensor, &Tensor)> {
    if model.arch() != Architecture::Linear1 {
        return Err(Error::invalid(format!(
            "closed-form vulnerability needs linear-1, got {}",
            model.arch().name()
        )));
    }
    let params = model.params();
    Ok((&params[0].1, &params[1].1))
}

fn target_of(label: &Label) -> Result<&Tensor> {
    match label {
        Label::Target(y) => Ok(y),
        Label::Class(_) => Err(Error::invalid("closed-form vulnerability needs a vector target")),
    }
}

/// `∂g/∂x` for linear-1, derived by hand. With `r = Wx + b − y` and
/// half-squared error, `∂(r_a x_b)/∂x_k = W_ak x_b + r_a δ_bk` and
/// `∂r_a/∂x_k = W_ak`; with the output projection `yᵀ(Wx + b)` the weight
/// block is `y_a δ_bk` and the bias block vanishes.
pub fn linear_input_jacobian(model: &AttackedModel, x: &Tensor, label: &Label) -> Result<Tensor> {
    let (w, b) = linear_parts(model)?;
    let y = target_of(label)?;
    let (c, n) = (w.shape()[0], w.shape()[1]);
    if x.len() != n || y.len() != c {
        return Err(Error::invalid("input or target has the wrong length"));
    }
    let (w, x, y) = (w.data(), x.data(), y.data());
    let mut jac = vec![0.0; (c * n + c) * n];
    match model.loss() {
        ClientLoss::HalfSquaredError => {
            let r: Vec<f64> = (0..c)
                .map(|a| (0..n).map(|k| w[a * n + k] * x[k]).sum::<f64>() + b.data()[a] - y[a])
                .collect();
            for a in 0..c {
                for bb in 0..n {
                    let row = a * n + bb;
                    for k in 0..n {
                        jac[row * n + k] = w[a * n + k] * x[bb];
                    }
                    jac[row * n + bb] += r[a];
                }
                let row = c * n + a;
                jac[row * n..(row + 1) * n].copy_from_slice(&w[a * n..(a + 1) * n]);
            }
        }
        ClientLoss::OutputProjection => {
            for a in 0..c {
                for bb in 0..n {
                    jac[(a * n + bb) * n + bb] = y[a];
                }
            }
        }
        ClientLoss::CrossEntropy => {
            return Err(Error::invalid("closed-form vulnerability needs a squared or projection loss"))
        }
    }
    Tensor::matrix(c * n + c, n, jac)
}

/// Max over the dataset of `‖∂g/∂x‖_F`, in closed form for linear-1:
/// `‖W‖²‖x‖² + 2 rᵀWx + n‖r‖² + ‖W‖²` under half-squared error and
/// `n‖y‖²` under the output projection.
pub fn exact_rv_bilinear(model: &AttackedModel, dataset: &[Tensor], labels: &[Label]) -> Result<f64> {
    let (w, b) = linear_parts(model)?;
    if dataset.is_empty() || dataset.len() != labels.len() {
        return Err(Error::invalid("need a nonempty dataset with one label per sample"));
    }
    let (c, n) = (w.shape()[0], w.shape()[1]);
    let w2: f64 = w.data().iter().map(|v| v * v).sum();
    let mut best = 0.0f64;
    for (x, label) in dataset.iter().zip(labels) {
        let y = target_of(label)?;
        if x.len() != n || y.len() != c {
            return Err(Error::invalid("input or target has the wrong length"));
        }
        let sq = match model.loss() {
            ClientLoss::HalfSquaredError => {
                let wx: Vec<f64> = (0..c)
                    .map(|a| (0..n).map(|k| w.data()[a * n + k] * x.data()[k]).sum())
                    .collect();
                let r: Vec<f64> = (0..c).map(|a| wx[a] + b.data()[a] - y.data()[a]).collect();
                let x2: f64 = x.data().iter().map(|v| v * v).sum();
                let rwx: f64 = r.iter().zip(&wx).map(|(p, q)| p * q).sum();
                let r2: f64 = r.iter().map(|v| v * v).sum();
                w2 * x2 + 2.0 * rwx + n as f64 * r2 + w2
            }
            ClientLoss::OutputProjection => n as f64 * y.data().iter().map(|v| v * v).sum::<f64>(),
            ClientLoss::CrossEntropy => {
                return Err(Error::invalid("closed-form vulnerability needs a squared or projection loss"))
            }
        };
        best = best.max(sq.max(0.0).sqrt());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvRow {
    pub model: String,
    pub estimate: RVEstimate,
    pub seed: u64,
}

pub fn rv_csv(rows: &[RvRow]) -> String {
    let mut out = String::from("model,rv,stderr,M,N,seed\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.17e},{:.17e},{},{},{}",
            r.model, r.estimate.value, r.estimate.stderr, r.estimate.m, r.estimate.n, r.seed
        );
    }
    out
}
