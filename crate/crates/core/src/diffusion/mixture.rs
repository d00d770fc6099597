//! Isotropic Gaussian mixtures as an exactly-known data distribution.
//!
//! Pushing component `N(m_k, v_k I)` through the forward process gives
//! `N(√α m_k, (α v_k + 1 − α) I)`, so the noised density, its score, and the
//! optimal noise predictor `ε* = −√(1 − α) ∇ log p_t` are all closed form.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Tensor>,
    variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Tensor>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::invalid("mixture needs equal, nonzero component counts"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mixture weights must form a simplex"));
        }
        if variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("mixture variances must be positive"));
        }
        let dim = means[0].len();
        if means.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid("mixture means must share a dimension"));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn single(mean: Tensor, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn means(&self) -> &[Tensor] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Tensor {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut k = self.components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let std = self.variances[k].sqrt();
        let noise = rng.normal_tensor(self.means[k].shape());
        self.means[k].add(&noise.scale(std))
    }

    /// `log p_t(x)` of the mixture pushed through the forward process with
    /// signal coefficient `alpha`.
    pub fn log_density(&self, x: &Tensor, alpha: f64) -> f64 {
        let n = x.len() as f64;
        let logs: Vec<f64> = (0..self.components())
            .map(|k| {
                let s = alpha * self.variances[k] + 1.0 - alpha;
                let d2: f64 = x
                    .data()
                    .iter()
                    .zip(self.means[k].data())
                    .map(|(xi, mi)| (xi - alpha.sqrt() * mi).powi(2))
                    .sum();
                self.weights[k].ln() - 0.5 * n * (2.0 * std::f64::consts::PI * s).ln() - d2 / (2.0 * s)
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    /// `∇ log p_t(x)` evaluated directly.
    pub fn score(&self, x: &Tensor, alpha: f64) -> Tensor {
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let eps = self.epsilon_node(&mut g, xv, alpha).expect("finite mixture score");
        g.value(eps).scale(-1.0 / (1.0 - alpha).sqrt())
    }

    /// Optimal noise prediction `ε*(x) = √(1 − α) Σ_k r_k(x) (x − √α m_k) / s_k`
    /// with responsibilities `r_k` and `s_k = α v_k + 1 − α`, as graph nodes.
    pub fn epsilon_node(&self, g: &mut Graph, x: Var, alpha: f64) -> Result<Var> {
        if g.value(x).len() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "mixture score",
                lhs: vec![self.dim()],
                rhs: g.shape(x).to_vec(),
            });
        }
        let shape = g.shape(x).to_vec();
        let n = self.dim() as f64;
        let root = alpha.sqrt();
        let noise_scale = (1.0 - alpha).sqrt();
        let mut diffs = Vec::with_capacity(self.components());
        let mut logits = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let s = alpha * self.variances[k] + 1.0 - alpha;
            let center = g.constant(self.means[k].reshaped(&shape)?.scale(root));
            let d = g.sub(x, center)?;
            if self.components() > 1 {
                let sq = g.square(d)?;
                let sq = g.sum(sq)?;
                let sq = g.scale(sq, -0.5 / s)?;
                let logit = g.add_const(sq, self.weights[k].ln() - 0.5 * n * s.ln())?;
                logits.push(logit);
            }
            diffs.push(g.scale(d, noise_scale / s)?);
        }
        if self.components() == 1 {
            return Ok(diffs[0]);
        }
        let logits = g.concat(&logits, 0)?;
        let resp = g.softmax(logits)?;
        let mut acc: Option<Var> = None;
        for (k, d) in diffs.into_iter().enumerate() {
            let r = g.narrow(resp, 0, k, 1)?;
            let r = g.expand(r, &shape)?;
            let term = g.mul(r, d)?;
            acc = Some(match acc {
                None => term,
                Some(a) => g.add(a, term)?,
            });
        }
        Ok(acc.expect("at least one component"))
    }

    /// Exact posterior `p(x_0 | x_t)` for a single-component mixture:
    /// returns the mean and the isotropic variance.
    pub fn single_posterior(&self, x_t: &Tensor, alpha: f64) -> Result<(Tensor, f64)> {
        if self.components() != 1 {
            return Err(Error::invalid(
                "closed-form posterior needs a single-component mixture",
            ));
        }
        let v = self.variances[0];
        let s = alpha * v + 1.0 - alpha;
        let gain = alpha.sqrt() * v / s;
        let m = &self.means[0];
        let mean = m.add(&x_t.sub(&m.scale(alpha.sqrt())).scale(gain));
        let var = v * (1.0 - alpha) / s;
        Ok((mean, var))
    }
}
