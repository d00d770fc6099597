//! Gradient inversion by gradient-guided DDIM sampling, and a pixel-space
//! gradient-matching baseline.
//!
//! Each reverse step estimates `x̂_0(x_t)`, feeds it to the attacked model,
//! and measures `ℒ = ‖g(x̂_0) − g_leaked‖`. The DDIM noise term is replaced by
//! a step on the sphere of radius `√n σ_t` around the DDIM mean `μ_θ` in the
//! direction of steepest descent of `ℒ` (optionally blended with the usual
//! random DDIM direction).

use std::fmt::Write as _;
use std::str::FromStr;

use crate::analysis::metrics::{mse, psnr};
use crate::autodiff::{Graph, Var};
use crate::diffusion::{ddim_mean_nodes, Denoiser, NoiseSchedule, PosteriorMode};
use crate::error::{Error, Result};
use crate::models::{AttackedModel, LeakedGradient};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Gradients with a smaller norm are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Default guidance rate.
pub const DEFAULT_GUIDANCE_RATE: f64 = 0.20;

/// Euclidean attack loss `‖g1 − g2‖` as a differentiable scalar.
pub fn attack_loss(g: &mut Graph, g1: Var, g2: Var) -> Result<Var> {
    if g.value(g1).len() != g.value(g2).len() {
        return Err(Error::ShapeMismatch {
            op: "attack_loss",
            lhs: g.shape(g1).to_vec(),
            rhs: g.shape(g2).to_vec(),
        });
    }
    let d = g.sub(g1, g2)?;
    g.norm(d)
}

/// `‖g1 − g2‖` for two leaked gradients.
pub fn attack_loss_value(g1: &LeakedGradient, g2: &LeakedGradient) -> Result<f64> {
    let mut g = Graph::new();
    let a = g.constant(g1.values.clone());
    let b = g.constant(g2.values.clone());
    let l = attack_loss(&mut g, a, b)?;
    Ok(g.value(l).item())
}

/// Everything an attack step needs besides the current iterate.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub sched: &'a NoiseSchedule,
    pub denoiser: &'a Denoiser,
    pub model: &'a AttackedModel,
    pub leaked: &'a LeakedGradient,
    pub mode: PosteriorMode,
}

impl AttackContext<'_> {
    fn validate(&self) -> Result<()> {
        if self.leaked.len() != self.model.param_count() {
            return Err(Error::invalid(format!(
                "leaked gradient has {} entries, model has {} parameters",
                self.leaked.len(),
                self.model.param_count()
            )));
        }
        if self.denoiser.dim() != self.model.input_dim() {
            return Err(Error::invalid(format!(
                "denoiser dimension {} differs from model input {}",
                self.denoiser.dim(),
                self.model.input_dim()
            )));
        }
        Ok(())
    }
}

/// Quantities computed at `x_t` during one guided step.
#[derive(Debug, Clone)]
pub struct Guidance {
    /// DDIM mean `μ_θ(x_t, t)`.
    pub mu: Tensor,
    /// Posterior-mean estimate `x̂_0(x_t)`.
    pub x0_hat: Tensor,
    /// `ℒ(g(x̂_0(x_t)), g_leaked)`.
    pub loss: f64,
    /// `∇_{x_t} ℒ`.
    pub grad: Tensor,
    /// `d* = −√n σ_t ∇ℒ / ‖∇ℒ‖`, or zero when degenerate.
    pub direction: Tensor,
    /// Set when `‖∇ℒ‖` was below [`DEGENERATE_NORM`].
    pub degenerate: bool,
}

/// Computes `d*` by differentiating the attack loss through the
/// client gradient and the posterior mean back to `x_t`.
pub fn guidance_direction(ctx: &AttackContext<'_>, x_t: &Tensor, t: usize) -> Result<Guidance> {
    ctx.validate()?;
    let mut g = Graph::new();
    let x = g.leaf(x_t.clone());
    let nodes = ddim_mean_nodes(&mut g, x, t, ctx.sched, ctx.denoiser, ctx.mode)?;
    let grad_node = ctx.model.gradient_node(&mut g, nodes.x0_hat, ctx.model.label())?;
    let leaked = g.constant(ctx.leaked.values.clone());
    let loss = attack_loss(&mut g, grad_node, leaked)?;
    let loss_value = g.value(loss).item();
    let mu = g.evaluate(nodes.mu);
    let x0_hat = g.evaluate(nodes.x0_hat);
    let grad = g.backward(loss, &[x])?.remove(0);

    let radius = (x_t.len() as f64).sqrt() * ctx.sched.sigma(t);
    let norm = grad.norm();
    let degenerate = norm < DEGENERATE_NORM;
    let direction = if degenerate {
        Tensor::zeros(x_t.shape())
    } else {
        grad.scale(-radius / norm)
    };
    Ok(Guidance {
        mu,
        x0_hat,
        loss: loss_value,
        grad,
        direction,
        degenerate,
    })
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x_prev: Tensor,
    pub guidance: Guidance,
    /// The step fell back to `x_{t−1} = μ_θ`.
    pub fallback: bool,
}

/// Exact spherical step `x_{t−1} = μ_θ + d*`. With a degenerate gradient
/// this is the deterministic DDIM step `μ_θ`.
pub fn ggss_step(ctx: &AttackContext<'_>, x_t: &Tensor, t: usize) -> Result<StepOutcome> {
    let guidance = guidance_direction(ctx, x_t, t)?;
    let x_prev = guidance.mu.add(&guidance.direction);
    Ok(StepOutcome {
        x_prev,
        fallback: guidance.degenerate,
        guidance,
    })
}

/// Radius of the blended step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `r = √n σ_t`, the spherical radius.
    Auto,
    Fixed(f64),
}

impl StepSize {
    pub fn radius(self, n: usize, sigma: f64) -> f64 {
        match self {
            StepSize::Auto => (n as f64).sqrt() * sigma,
            StepSize::Fixed(r) => r,
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(StepSize::Auto);
        }
        let r: f64 = s
            .parse()
            .map_err(|_| Error::invalid(format!("step size `{s}` is neither `auto` nor a number")))?;
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::invalid(format!("step size must be positive, got {r}")));
        }
        Ok(StepSize::Fixed(r))
    }
}

impl std::fmt::Display for StepSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(r) => write!(f, "{r}"),
        }
    }
}

/// `x_{t−1} = μ_θ + r d_m/‖d_m‖` with `d_m = d_sample + m_r (d* − d_sample)`
/// and `d_sample = σ_t ε`.
pub fn blended_step(
    ctx: &AttackContext<'_>,
    x_t: &Tensor,
    t: usize,
    guidance_rate: f64,
    step: StepSize,
    rng: &mut SeededRng,
) -> Result<StepOutcome> {
    if !(0.0..=1.0).contains(&guidance_rate) {
        return Err(Error::invalid(format!(
            "guidance rate {guidance_rate} outside [0, 1]"
        )));
    }
    let guidance = guidance_direction(ctx, x_t, t)?;
    let sigma = ctx.sched.sigma(t);
    let sample = rng.normal_tensor(x_t.shape()).scale(sigma);
    let mixed = sample.add(&guidance.direction.sub(&sample).scale(guidance_rate));
    let norm = mixed.norm();
    let radius = step.radius(x_t.len(), sigma);
    let (x_prev, fallback) = if norm < DEGENERATE_NORM {
        (guidance.mu.clone(), true)
    } else {
        (guidance.mu.add(&mixed.scale(radius / norm)), false)
    };
    Ok(StepOutcome {
        x_prev,
        guidance,
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub steps: usize,
    pub eta: f64,
    pub guidance_rate: f64,
    pub step_size: StepSize,
    pub seed: u64,
    /// Number of `x̂_0` snapshots kept over the run.
    pub snapshots: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            eta: 0.5,
            guidance_rate: DEFAULT_GUIDANCE_RATE,
            step_size: StepSize::Auto,
            seed: 0,
            snapshots: 10,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.guidance_rate) {
            return Err(Error::invalid(format!(
                "guidance rate {} outside [0, 1]",
                self.guidance_rate
            )));
        }
        if let StepSize::Fixed(r) = self.step_size {
            if !(r > 0.0) {
                return Err(Error::invalid("step size must be positive"));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.steps, self.eta)
    }

    /// Pure spherical steps: full guidance at the spherical radius.
    pub fn is_spherical(&self) -> bool {
        self.guidance_rate == 1.0 && self.step_size == StepSize::Auto
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub attack_loss: f64,
    /// NaN when no target was supplied.
    pub mse: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone)]
pub struct AttackTrace {
    /// One record per executed step, in execution order.
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<(usize, Tensor)>,
    pub reconstruction: Tensor,
    pub final_mse: f64,
    pub final_psnr: f64,
    /// Steps whose guidance was degenerate or fell back to `μ_θ`.
    pub flagged_steps: Vec<usize>,
    /// Evaluations of `∇_x ℒ` spent.
    pub gradient_evaluations: usize,
}

impl AttackTrace {
    /// Best PSNR seen over the intermediate estimates and the final output.
    pub fn peak_psnr(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.psnr)
            .chain(std::iter::once(self.final_psnr))
            .filter(|p| !p.is_nan())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn peak_mse(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.mse)
            .chain(std::iter::once(self.final_mse))
            .filter(|p| !p.is_nan())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.attack_loss).collect()
    }

    /// `t,attack_loss,mse,psnr` with full-precision values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,attack_loss,mse,psnr\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e}",
                r.t, r.attack_loss, r.mse, r.psnr
            );
        }
        out
    }
}

fn metrics(estimate: &Tensor, target: Option<&Tensor>) -> Result<(f64, f64)> {
    match target {
        Some(tg) => Ok((mse(estimate, tg)?, psnr(estimate, tg, 1.0)?)),
        None => Ok((f64::NAN, f64::NAN)),
    }
}

fn abort_on_nan(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::NumericAbort { step },
        other => other,
    }
}

/// Runs the guided reverse process from `x_T ~ N(0, I)` for `t = T..1`.
/// Metrics are measured on `x̂_0(x_t)` at every step and on the final `x_0`.
pub fn run_attack(
    ctx: &AttackContext<'_>,
    cfg: &AttackConfig,
    target: Option<&Tensor>,
) -> Result<AttackTrace> {
    cfg.validate()?;
    ctx.validate()?;
    let steps = ctx.sched.steps();
    let mut rng = SeededRng::new(cfg.seed);
    let mut x = rng.normal_tensor(&[ctx.model.input_dim()]);
    let every = (steps / cfg.snapshots.max(1)).max(1);
    let mut records = Vec::with_capacity(steps);
    let mut snapshots = Vec::new();
    let mut flagged = Vec::new();

    for t in (1..=steps).rev() {
        let outcome = if cfg.is_spherical() {
            ggss_step(ctx, &x, t)
        } else {
            blended_step(ctx, &x, t, cfg.guidance_rate, cfg.step_size, &mut rng)
        }
        .map_err(abort_on_nan(t))?;
        if !outcome.x_prev.is_finite() {
            return Err(Error::NumericAbort { step: t });
        }
        let (m, p) = metrics(&outcome.guidance.x0_hat, target)?;
        records.push(StepRecord {
            t,
            attack_loss: outcome.guidance.loss,
            mse: m,
            psnr: p,
        });
        if (steps - t) % every == 0 && snapshots.len() < cfg.snapshots {
            snapshots.push((t, outcome.guidance.x0_hat.clone()));
        }
        if outcome.guidance.degenerate || outcome.fallback {
            flagged.push(t);
        }
        x = outcome.x_prev;
    }
    let (final_mse, final_psnr) = metrics(&x, target)?;
    Ok(AttackTrace {
        records,
        snapshots,
        reconstruction: x,
        final_mse,
        final_psnr,
        flagged_steps: flagged,
        gradient_evaluations: steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlgConfig {
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
}

/// `‖g(x) − g_leaked‖` and, optionally, its gradient in `x`.
fn dlg_objective(
    model: &AttackedModel,
    leaked: &LeakedGradient,
    x: &Tensor,
    with_grad: bool,
) -> Result<(f64, Option<Tensor>)> {
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let grad = model.gradient_node(&mut g, xv, model.label())?;
    let target = g.constant(leaked.values.clone());
    let loss = attack_loss(&mut g, grad, target)?;
    let value = g.value(loss).item();
    if !with_grad {
        return Ok((value, None));
    }
    Ok((value, Some(g.backward(loss, &[xv])?.remove(0))))
}

/// Gradient descent on `x` for `‖g(x) − g_leaked‖²` from `x ~ N(0, I)`.
/// A step that would increase the loss is retried with half the learning
/// rate; accepted steps grow it by 10%. The trace stores `‖g(x) − g_leaked‖`
/// with `t` counting down from `iters`.
pub fn dlg_baseline(
    model: &AttackedModel,
    leaked: &LeakedGradient,
    cfg: DlgConfig,
    target: Option<&Tensor>,
) -> Result<AttackTrace> {
    if cfg.iters == 0 {
        return Err(Error::invalid("dlg needs at least one iteration"));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::invalid("dlg learning rate must be positive"));
    }
    if leaked.len() != model.param_count() {
        return Err(Error::invalid("leaked gradient length differs from model"));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut x = rng.normal_tensor(&[model.input_dim()]);
    let mut lr = cfg.lr;
    let mut records = Vec::with_capacity(cfg.iters);
    for k in 0..cfg.iters {
        let t = cfg.iters - k;
        let (loss, grad) = dlg_objective(model, leaked, &x, true).map_err(abort_on_nan(t))?;
        let grad = grad.expect("gradient requested");
        let (m, p) = metrics(&x, target)?;
        records.push(StepRecord {
            t,
            attack_loss: loss,
            mse: m,
            psnr: p,
        });
        // d‖r‖²/dx = 2‖r‖ d‖r‖/dx
        let direction = grad.scale(2.0 * loss);
        for _ in 0..40 {
            let candidate = x.sub(&direction.scale(lr));
            let ok = candidate.is_finite()
                && matches!(dlg_objective(model, leaked, &candidate, false), Ok((l, _)) if l <= loss);
            if ok {
                x = candidate;
                lr *= 1.1;
                break;
            }
            lr *= 0.5;
        }
    }
    let (final_mse, final_psnr) = metrics(&x, target)?;
    Ok(AttackTrace {
        records,
        snapshots: Vec::new(),
        reconstruction: x,
        final_mse,
        final_psnr,
        flagged_steps: Vec::new(),
        gradient_evaluations: cfg.iters,
    })
}
