//! Jensen gap of the client-gradient map under the exact Gaussian posterior
//! `p(x_0 | x_t)`, and the corresponding upper bound.

use crate::diffusion::{GaussianMixture, NoiseSchedule};
use crate::error::{Error, Result};
use crate::models::AttackedModel;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct JensenGap {
    /// `‖mean_s g(x_0^s) − g(E[x_0 | x_t])‖`
    pub gap: f64,
    /// Monte-Carlo standard error of the mean gradient, as a norm.
    pub stderr: f64,
    /// Per-coordinate posterior variance.
    pub posterior_variance: f64,
    /// Sample mean of `‖x_0 − E[x_0 | x_t]‖`.
    pub mean_deviation: f64,
    /// Largest finite-difference Frobenius norm of `∂g/∂x` over the samples
    /// it was evaluated at.
    pub jacobian_norm: f64,
    pub samples: usize,
}

impl JensenGap {
    /// `n/√(2πσ²) · ‖∂g/∂x‖ · E‖x_0 − x̂_0‖` for gradient-noise variance σ².
    pub fn upper_bound(&self, dim: usize, noise_variance: f64) -> f64 {
        dim as f64 / (2.0 * std::f64::consts::PI * noise_variance).sqrt()
            * self.jacobian_norm
            * self.mean_deviation
    }
}

/// Central finite differences of the client gradient with respect to `x`,
/// `[P, n]`.
pub fn fd_input_jacobian(model: &AttackedModel, x: &Tensor, label: &crate::models::Label, h: f64) -> Result<Tensor> {
    let n = x.len();
    let p = model.param_count();
    let mut jac = vec![0.0; p * n];
    for k in 0..n {
        let mut plus = x.clone();
        plus.data_mut()[k] += h;
        let mut minus = x.clone();
        minus.data_mut()[k] -= h;
        let gp = model.client_gradient(&plus, label)?.values;
        let gm = model.client_gradient(&minus, label)?.values;
        for row in 0..p {
            jac[row * n + k] = (gp.data()[row] - gm.data()[row]) / (2.0 * h);
        }
    }
    Tensor::matrix(p, n, jac)
}

/// Monte-Carlo Jensen gap at `x_t`. The finite-difference Jacobian norm is
/// evaluated at the posterior mean and at the first `jacobian_points`
/// posterior samples.
pub fn jensen_gap_estimate(
    model: &AttackedModel,
    gm: &GaussianMixture,
    sched: &NoiseSchedule,
    t: usize,
    x_t: &Tensor,
    samples: usize,
    jacobian_points: usize,
    rng: &mut SeededRng,
) -> Result<JensenGap> {
    if samples < 1000 {
        return Err(Error::invalid("need at least 10³ posterior samples"));
    }
    sched.check_step(t)?;
    let (mean, var) = gm.single_posterior(x_t, sched.alpha(t))?;
    let label = model.label().clone();
    let std = var.sqrt();
    let p = model.param_count();
    let mut sum = vec![0.0; p];
    let mut sum_sq = vec![0.0; p];
    let mut deviation = 0.0;
    let mut jac_norm = fd_input_jacobian(model, &mean, &label, 1e-5)?.norm();
    for s in 0..samples {
        let noise = rng.normal_tensor(mean.shape()).scale(std);
        let x0 = mean.add(&noise);
        deviation += noise.norm();
        let g = model.client_gradient(&x0, &label)?.values;
        for (i, v) in g.data().iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
        if s < jacobian_points {
            jac_norm = jac_norm.max(fd_input_jacobian(model, &x0, &label, 1e-5)?.norm());
        }
    }
    let s = samples as f64;
    let at_mean = model.client_gradient(&mean, &label)?.values;
    let mut gap_sq = 0.0;
    let mut var_sum = 0.0;
    for i in 0..p {
        let m = sum[i] / s;
        gap_sq += (m - at_mean.data()[i]).powi(2);
        var_sum += (sum_sq[i] / s - m * m).max(0.0) * s / (s - 1.0);
    }
    Ok(JensenGap {
        gap: gap_sq.sqrt(),
        stderr: (var_sum / s).sqrt(),
        posterior_variance: var,
        mean_deviation: deviation / s,
        jacobian_norm: jac_norm,
        samples,
    })
}
