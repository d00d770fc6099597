//! Forward noising, the posterior-mean estimate and DDIM reverse steps.

use std::str::FromStr;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::denoiser::Denoiser;
use super::schedule::NoiseSchedule;

/// Coefficient on `ε_θ` when estimating `x̂_0` from `x_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PosteriorMode {
    /// `√(1 − α_t)`, the exact inversion of the forward process.
    #[default]
    Consistent,
    /// `(1 − α_t)`, the noise coefficient without the square root.
    Unrooted,
}

impl PosteriorMode {
    pub fn name(self) -> &'static str {
        match self {
            PosteriorMode::Consistent => "consistent",
            PosteriorMode::Unrooted => "unrooted",
        }
    }

    pub fn noise_coeff(self, alpha: f64) -> f64 {
        match self {
            PosteriorMode::Consistent => (1.0 - alpha).sqrt(),
            PosteriorMode::Unrooted => 1.0 - alpha,
        }
    }
}

impl FromStr for PosteriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(PosteriorMode::Consistent),
            "unrooted" => Ok(PosteriorMode::Unrooted),
            _ => Err(Error::Unknown {
                kind: "posterior mode",
                name: s.to_string(),
            }),
        }
    }
}

/// `x_t = √α_t x_0 + √(1 − α_t) ε`; returns `(x_t, ε)`.
pub fn forward_sample(
    x0: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<(Tensor, Tensor)> {
    sched.check_step(t)?;
    let eps = rng.normal_tensor(x0.shape());
    Ok((forward_with_noise(x0, &eps, sched.alpha(t)), eps))
}

pub fn forward_with_noise(x0: &Tensor, eps: &Tensor, alpha: f64) -> Tensor {
    x0.scale(alpha.sqrt()).add(&eps.scale((1.0 - alpha).sqrt()))
}

/// `x̂_0 = (x_t − c·ε_θ) / √α_t` as a node, given the prediction node.
pub fn posterior_mean_node(
    g: &mut Graph,
    x_t: Var,
    eps: Var,
    t: usize,
    sched: &NoiseSchedule,
    mode: PosteriorMode,
) -> Result<Var> {
    let alpha = sched.alpha(t);
    let scaled = g.scale(eps, mode.noise_coeff(alpha))?;
    let diff = g.sub(x_t, scaled)?;
    g.scale(diff, 1.0 / alpha.sqrt())
}

pub fn posterior_mean(
    x_t: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
    denoiser: &Denoiser,
    mode: PosteriorMode,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.leaf(x_t.clone());
    let eps = denoiser.predict(&mut g, x, t, sched)?;
    let x0 = posterior_mean_node(&mut g, x, eps, t, sched, mode)?;
    Ok(g.evaluate(x0))
}

/// Nodes of one DDIM step: prediction, clean estimate and mean.
#[derive(Debug, Clone, Copy)]
pub struct DdimNodes {
    pub eps: Var,
    pub x0_hat: Var,
    pub mu: Var,
}

/// Builds `μ = √α_{t−1} x̂_0 + √(1 − α_{t−1} − σ_t²) ε_θ` into `g`.
pub fn ddim_mean_nodes(
    g: &mut Graph,
    x_t: Var,
    t: usize,
    sched: &NoiseSchedule,
    denoiser: &Denoiser,
    mode: PosteriorMode,
) -> Result<DdimNodes> {
    sched.check_step(t)?;
    let dir = sched.direction_coeff(t)?;
    let eps = denoiser.predict(g, x_t, t, sched)?;
    let x0_hat = posterior_mean_node(g, x_t, eps, t, sched, mode)?;
    let a = g.scale(x0_hat, sched.alpha(t - 1).sqrt())?;
    let b = g.scale(eps, dir)?;
    let mu = g.add(a, b)?;
    Ok(DdimNodes { eps, x0_hat, mu })
}

/// One reverse step. Returns `(μ, x_{t−1} = μ + σ_t ε)`.
pub fn ddim_step(
    x_t: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
    denoiser: &Denoiser,
    mode: PosteriorMode,
    rng: &mut SeededRng,
) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let x = g.leaf(x_t.clone());
    let nodes = ddim_mean_nodes(&mut g, x, t, sched, denoiser, mode)?;
    let mu = g.evaluate(nodes.mu);
    let sigma = sched.sigma(t);
    let next = if sigma > 0.0 {
        mu.add(&rng.normal_tensor(mu.shape()).scale(sigma))
    } else {
        mu.clone()
    };
    Ok((mu, next))
}

/// Full reverse pass from `x_T ~ N(0, I)`.
pub fn ddim_sample(
    denoiser: &Denoiser,
    sched: &NoiseSchedule,
    mode: PosteriorMode,
    seed: u64,
) -> Result<Tensor> {
    let mut rng = SeededRng::new(seed);
    let mut x = rng.normal_tensor(&[denoiser.dim()]);
    ddim_reverse_from(&mut x, denoiser, sched, mode, &mut rng)?;
    Ok(x)
}

/// Runs the reverse pass in place from a given `x_T`.
pub fn ddim_reverse_from(
    x: &mut Tensor,
    denoiser: &Denoiser,
    sched: &NoiseSchedule,
    mode: PosteriorMode,
    rng: &mut SeededRng,
) -> Result<()> {
    for t in (1..=sched.steps()).rev() {
        let (_, next) = ddim_step(x, t, sched, denoiser, mode, rng)?;
        *x = next;
    }
    Ok(())
}
