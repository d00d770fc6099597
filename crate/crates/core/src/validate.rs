//! The suite of empirical checks run by `verify-theorems`.

use crate::analysis::checks::{check_monotonicity, check_strict_decrease, convergence_rate_report, laurent_massart_check};
use crate::analysis::jensen::jensen_gap_estimate;
use crate::analysis::report::TheoremReport;
use crate::analysis::spectrum::{gram, power_extremes, symmetric_extremes};
use crate::attack::{run_attack, AttackConfig, AttackContext, AttackTrace};
use crate::diffusion::{forward_sample, Denoiser, GaussianMixture};
use crate::error::{Error, Result};
use crate::experiment::{mean, run_parallel, Benchmark, NoiseSetting};
use crate::models::{Architecture, AttackedModel, ClientLoss, Label, ModelSpec, Perturbation};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// `(n, ε)` grid of the concentration check.
pub const LM_GRID: [(usize, f64); 6] = [
    (1000, 0.005),
    (1000, 0.01),
    (1000, 0.05),
    (4096, 0.005),
    (4096, 0.01),
    (4096, 0.05),
];

/// Output-projection classes used with linear-1 in the convex regime.
pub const CONVEX_OUTPUTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateConfig {
    pub seeds: Vec<u64>,
    pub lm_samples: usize,
    pub jensen_samples: usize,
    pub jensen_jacobian_points: usize,
    /// Gradient-noise variance at which the Jensen upper bound is evaluated.
    pub jensen_noise_variance: f64,
    pub variances: Vec<f64>,
    pub jobs: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            lm_samples: 20_000,
            jensen_samples: 2_000,
            jensen_jacobian_points: 8,
            jensen_noise_variance: 0.1,
            variances: crate::defense::VARIANCE_GRID.to_vec(),
            jobs: 1,
        }
    }
}

/// `N(mean, v I)` with `v` the average per-pixel variance of `data`.
pub fn fit_single_gaussian(data: &[Tensor]) -> Result<GaussianMixture> {
    let first = data.first().ok_or_else(|| Error::invalid("empty dataset"))?;
    let n = first.len();
    let count = data.len() as f64;
    let mut m = vec![0.0; n];
    for x in data {
        for (a, v) in m.iter_mut().zip(x.data()) {
            *a += v / count;
        }
    }
    let mut var = 0.0;
    for x in data {
        for (a, v) in m.iter().zip(x.data()) {
            var += (v - a).powi(2);
        }
    }
    GaussianMixture::single(Tensor::vector(m), var / (count * n as f64))
}

/// Linear-1 with the output-projection loss, whose client gradient is
/// affine in the input.
pub fn convex_model(dim: usize, seed: u64) -> Result<AttackedModel> {
    let y = SeededRng::derived(seed, 7).normal_tensor(&[CONVEX_OUTPUTS]);
    AttackedModel::build(
        ModelSpec::new(Architecture::Linear1, dim, CONVEX_OUTPUTS),
        ClientLoss::OutputProjection,
        Label::Target(y),
        seed,
    )
}

/// Exact spherical attack in the convex regime: linear-1 with the output
/// projection, the Gaussian oracle fitted to the training shapes, and a
/// held-out target.
pub fn convex_regime_trace(bench: &Benchmark, oracle: &Denoiser, seed: u64) -> Result<AttackTrace> {
    let cfg = bench.config();
    let model = convex_model(cfg.dim(), seed)?;
    let target = bench.targets(seed, 1).remove(0);
    let leaked = model.client_gradient(&target, model.label())?;
    let ctx = AttackContext {
        sched: bench.schedule(),
        denoiser: oracle,
        model: &model,
        leaked: &leaked,
        mode: cfg.mode,
    };
    let attack = AttackConfig {
        steps: cfg.steps,
        eta: cfg.eta,
        guidance_rate: 1.0,
        step_size: crate::attack::StepSize::Auto,
        seed,
        snapshots: 10,
    };
    run_attack(&ctx, &attack, Some(&target))
}

pub fn concentration_reports(vc: &ValidateConfig) -> Result<Vec<TheoremReport>> {
    run_parallel(&LM_GRID, vc.jobs, |&(n, eps)| {
        let mut rng = SeededRng::derived(vc.seeds[0], n as u64 ^ eps.to_bits());
        let mut r = laurent_massart_check(n, 1.0, eps, vc.lm_samples, &mut rng)?;
        r.id = format!("chi-square-tail[n={n},eps={eps}]");
        r.seeds = vec![vc.seeds[0]];
        Ok(r)
    })
}

/// Jensen gap checks: zero for an affine gradient map, growing with the
/// posterior variance for mlp-2, and below the upper bound.
pub fn jensen_reports(bench: &Benchmark, gm: &GaussianMixture, vc: &ValidateConfig) -> Result<Vec<TheoremReport>> {
    let cfg = bench.config();
    let sched = bench.schedule();
    let seed = vc.seeds[0];
    let target = bench.targets(seed, 1).remove(0);
    let steps = sched.steps();
    let levels = [steps / 4, steps / 2, 3 * steps / 4];
    let mut x_rng = SeededRng::derived(seed, 11);
    let x_ts = levels
        .iter()
        .map(|&t| forward_sample(&target, t, sched, &mut x_rng).map(|(x, _)| (t, x)))
        .collect::<Result<Vec<(usize, Tensor)>>>()?;

    let mut out = Vec::new();
    let affine = convex_model(cfg.dim(), seed)?;
    let (t, x_t) = &x_ts[1];
    let gap = jensen_gap_estimate(
        &affine,
        gm,
        sched,
        *t,
        x_t,
        vc.jensen_samples,
        0,
        &mut SeededRng::derived(seed, 12),
    )?;
    let mut r = TheoremReport::new("jensen-affine", 4.0, gap.samples);
    r.push("gap", gap.gap);
    r.push("stderr", gap.stderr);
    r.pass = gap.gap <= 4.0 * gap.stderr;
    r.seeds = vec![seed];
    out.push(r);

    let model = AttackedModel::build(
        ModelSpec::new(Architecture::Mlp2, cfg.dim(), cfg.num_classes),
        ClientLoss::CrossEntropy,
        Label::Class(seed as usize % cfg.num_classes),
        seed,
    )?;
    let gaps = run_parallel(&x_ts, vc.jobs, |(t, x_t)| {
        jensen_gap_estimate(
            &model,
            gm,
            sched,
            *t,
            x_t,
            vc.jensen_samples,
            vc.jensen_jacobian_points,
            &mut SeededRng::derived(seed, 13 + *t as u64),
        )
    })?;
    let mut trend = TheoremReport::new("jensen-gap-trend", 0.0, vc.jensen_samples * levels.len());
    let mut bound = TheoremReport::new("jensen-gap-bound", vc.jensen_noise_variance, vc.jensen_samples * levels.len());
    let mut bound_ok = true;
    for gap in &gaps {
        let pv = gap.posterior_variance;
        trend.push(format!("gap@var{pv:.6e}"), gap.gap);
        let b = gap.upper_bound(cfg.dim(), vc.jensen_noise_variance);
        bound.push(format!("gap@var{pv:.6e}"), gap.gap);
        bound.push(format!("bound@var{pv:.6e}"), b);
        bound_ok &= gap.gap <= b;
    }
    trend.pass = gaps[0].gap > 0.0
        && gaps.windows(2).all(|w| w[1].posterior_variance > w[0].posterior_variance && w[1].gap > w[0].gap);
    bound.pass = bound_ok;
    trend.seeds = vec![seed];
    bound.seeds = vec![seed];
    out.push(trend);
    out.push(bound);
    Ok(out)
}

pub fn spectrum_report(bench: &Benchmark, vc: &ValidateConfig) -> Result<TheoremReport> {
    let cfg = bench.config();
    let seed = vc.seeds[0];
    let model = AttackedModel::build(
        ModelSpec::new(Architecture::Mlp2, cfg.dim(), cfg.num_classes),
        ClientLoss::CrossEntropy,
        Label::Class(0),
        seed,
    )?;
    let x = bench.targets(seed, 1).remove(0);
    let g = gram(&model.input_jacobian(&x, model.label())?)?;
    let (lo, hi) = symmetric_extremes(&g)?;
    let (_, phi) = power_extremes(&g, 200_000)?;
    let mut r = TheoremReport::new("jacobian-spectrum", 1e-6, 1);
    r.push("lambda_min", lo);
    r.push("lambda_max", hi);
    r.push("power_lambda_max", phi);
    r.pass = hi >= lo && (hi - phi).abs() <= 1e-6 * hi.abs();
    r.seeds = vec![seed];
    Ok(r)
}

/// Runs every validator. Reports are returned in a fixed order.
pub fn run_validators(bench: &Benchmark, vc: &ValidateConfig) -> Result<Vec<TheoremReport>> {
    if vc.seeds.is_empty() {
        return Err(Error::invalid("validators need at least one seed"));
    }
    let mut reports = concentration_reports(vc)?;
    let gm = fit_single_gaussian(&bench.config().training_set())?;
    reports.extend(jensen_reports(bench, &gm, vc)?);
    reports.push(spectrum_report(bench, vc)?);

    let oracle = Denoiser::oracle(gm);
    for &seed in &vc.seeds {
        let trace = convex_regime_trace(bench, &oracle, seed)?;
        let mut r = check_monotonicity(&trace, 1e-9)?;
        r.id = format!("convex-monotonicity[seed={seed}]");
        r.seeds = vec![seed];
        reports.push(r);
    }

    let arch = Architecture::CnnTiny;
    let cells: Vec<(f64, u64)> = vc
        .variances
        .iter()
        .flat_map(|&v| vc.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let trials = run_parallel(&cells, vc.jobs, |&(variance, seed)| {
        bench.attack_trial(arch, seed, NoiseSetting { kind: Perturbation::Gaussian, variance }, 1)
    })?;
    let mut levels: Vec<(f64, Vec<AttackTrace>)> = Vec::new();
    let mut peaks = Vec::new();
    for &v in &vc.variances {
        let sel: Vec<_> = cells
            .iter()
            .zip(&trials)
            .filter(|((cv, _), _)| *cv == v)
            .map(|(_, t)| t)
            .collect();
        peaks.push(mean(&sel.iter().map(|t| t.peak_psnr).collect::<Vec<_>>()));
        levels.push((v, sel.iter().map(|t| t.trace.clone()).collect()));
    }
    let mut rate = convergence_rate_report(&levels)?;
    rate.seeds = vc.seeds.clone();
    reports.push(rate);
    let mut order = check_strict_decrease("noise-psnr-ordering", &vc.variances, &peaks, cells.len());
    order.seeds = vc.seeds.clone();
    reports.push(order);
    Ok(reports)
}
