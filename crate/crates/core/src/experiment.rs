//! The standard toy benchmark: 8×8 procedural shapes, a trained denoiser,
//! held-out targets, and seeded attack trials against the model zoo.

use std::fmt::Write as _;

use crate::attack::{dlg_baseline, run_attack, AttackConfig, AttackContext, AttackTrace, DlgConfig, StepSize};
use crate::data::shapes_dataset;
use crate::defense::perturb;
use crate::diffusion::{train_denoiser, Denoiser, NoiseSchedule, PosteriorMode, TrainConfig};
use crate::error::{Error, Result};
use crate::models::{Architecture, AttackedModel, ClientLoss, Label, ModelSpec, Perturbation};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// RNG stream for gradient perturbation noise within a trial seed.
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub side: usize,
    pub train_images: usize,
    pub data_seed: u64,
    /// Seed of the held-out target images; must differ from `data_seed`.
    pub target_seed: u64,
    pub num_classes: usize,
    pub steps: usize,
    pub eta: f64,
    pub guidance_rate: f64,
    pub step_size: StepSize,
    pub mode: PosteriorMode,
    pub train: TrainConfig,
    pub dlg_lr: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            side: 8,
            train_images: 512,
            data_seed: 0,
            target_seed: 1,
            num_classes: 10,
            steps: 100,
            eta: 0.5,
            guidance_rate: crate::attack::DEFAULT_GUIDANCE_RATE,
            step_size: StepSize::Auto,
            mode: PosteriorMode::Consistent,
            train: TrainConfig::default(),
            dlg_lr: 0.1,
        }
    }
}

impl BenchmarkConfig {
    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.steps, self.eta)
    }

    pub fn training_set(&self) -> Vec<Tensor> {
        shapes_dataset(self.train_images, self.side, self.data_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_seed == self.data_seed {
            return Err(Error::invalid("target_seed must differ from data_seed"));
        }
        if self.side < 4 {
            return Err(Error::invalid("image side must be at least 4"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        Ok(())
    }
}

/// One attack trial's summary.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub peak_psnr: f64,
    pub final_psnr: f64,
    pub peak_mse: f64,
    pub trace: AttackTrace,
}

impl TrialResult {
    fn from_trace(seed: u64, trace: AttackTrace) -> Self {
        Self {
            seed,
            peak_psnr: trace.peak_psnr(),
            final_psnr: trace.final_psnr,
            peak_mse: trace.peak_mse(),
            trace,
        }
    }
}

/// Noise applied to the shared gradient in a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSetting {
    pub kind: Perturbation,
    pub variance: f64,
}

impl NoiseSetting {
    pub const NONE: NoiseSetting = NoiseSetting {
        kind: Perturbation::None,
        variance: 0.0,
    };
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    cfg: BenchmarkConfig,
    sched: NoiseSchedule,
    denoiser: Denoiser,
}

/// The trial's victim: the model, the batch it was trained on, and the
/// (possibly perturbed) shared gradient.
struct Victim {
    model: AttackedModel,
    targets: Vec<Tensor>,
    leaked: crate::models::LeakedGradient,
}

impl Benchmark {
    /// Trains the denoiser on the configured shape dataset.
    pub fn train(cfg: BenchmarkConfig) -> Result<(Self, Vec<f64>)> {
        cfg.validate()?;
        let sched = cfg.schedule()?;
        let trained = train_denoiser(&cfg.training_set(), &sched, cfg.train)?;
        Ok((
            Self {
                cfg,
                sched,
                denoiser: trained.denoiser,
            },
            trained.loss_trace,
        ))
    }

    pub fn with_denoiser(cfg: BenchmarkConfig, denoiser: Denoiser) -> Result<Self> {
        cfg.validate()?;
        if denoiser.dim() != cfg.dim() {
            return Err(Error::invalid(format!(
                "denoiser dimension {} does not match {}×{} images",
                denoiser.dim(),
                cfg.side,
                cfg.side
            )));
        }
        let sched = cfg.schedule()?;
        Ok(Self { cfg, sched, denoiser })
    }

    pub fn config(&self) -> &BenchmarkConfig {
        &self.cfg
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.denoiser
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    /// Held-out images for trial `seed` with batch size `batch`.
    pub fn targets(&self, seed: u64, batch: usize) -> Vec<Tensor> {
        let all = shapes_dataset((seed as usize + 1) * batch, self.cfg.side, self.cfg.target_seed);
        all[seed as usize * batch..].to_vec()
    }

    fn victim(&self, arch: Architecture, seed: u64, noise: NoiseSetting, batch: usize) -> Result<Victim> {
        if batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let targets = self.targets(seed, batch);
        let labels: Vec<Label> = (0..batch)
            .map(|i| Label::Class((seed as usize + i) % self.cfg.num_classes))
            .collect();
        let spec = ModelSpec::new(arch, self.cfg.dim(), self.cfg.num_classes);
        let model = AttackedModel::build(spec, ClientLoss::CrossEntropy, labels[0].clone(), seed)?;
        let clean = model.batch_gradient(&targets, &labels)?;
        let mut rng = SeededRng::derived(seed, NOISE_STREAM);
        let leaked = perturb(&clean, noise.kind, noise.variance, &mut rng)?;
        Ok(Victim {
            model,
            targets,
            leaked,
        })
    }

    /// Attacks the gradient of a batch of held-out images and scores the
    /// reconstruction against the first image of the batch, whose label the
    /// attacker is given.
    pub fn attack_trial(
        &self,
        arch: Architecture,
        seed: u64,
        noise: NoiseSetting,
        batch: usize,
    ) -> Result<TrialResult> {
        let v = self.victim(arch, seed, noise, batch)?;
        let ctx = AttackContext {
            sched: &self.sched,
            denoiser: &self.denoiser,
            model: &v.model,
            leaked: &v.leaked,
            mode: self.cfg.mode,
        };
        let cfg = AttackConfig {
            steps: self.cfg.steps,
            eta: self.cfg.eta,
            guidance_rate: self.cfg.guidance_rate,
            step_size: self.cfg.step_size,
            seed,
            snapshots: 10,
        };
        let trace = run_attack(&ctx, &cfg, Some(&v.targets[0]))?;
        Ok(TrialResult::from_trace(seed, trace))
    }

    /// Pixel-space baseline with as many gradient evaluations as the attack
    /// has reverse steps.
    pub fn dlg_trial(
        &self,
        arch: Architecture,
        seed: u64,
        noise: NoiseSetting,
        batch: usize,
    ) -> Result<TrialResult> {
        let v = self.victim(arch, seed, noise, batch)?;
        let cfg = DlgConfig {
            iters: self.cfg.steps,
            lr: self.cfg.dlg_lr,
            seed,
        };
        let trace = dlg_baseline(&v.model, &v.leaked, cfg, Some(&v.targets[0]))?;
        Ok(TrialResult::from_trace(seed, trace))
    }
}

/// Runs `f` over `items` on `jobs` worker threads, keeping input order.
pub fn run_parallel<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kind: Perturbation,
    pub variance: f64,
    pub seed: u64,
    pub peak_psnr: f64,
    pub final_psnr: f64,
    pub peak_mse: f64,
}

/// Attack trials over every `(kind, variance, seed)` combination, sorted by
/// kind, then variance, then seed.
pub fn noise_sweep(
    bench: &Benchmark,
    arch: Architecture,
    kinds: &[Perturbation],
    variances: &[f64],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let mut cells = Vec::new();
    for &kind in kinds {
        for &variance in variances {
            for &seed in seeds {
                cells.push((kind, variance, seed));
            }
        }
    }
    let mut rows = run_parallel(&cells, jobs, |&(kind, variance, seed)| {
        let r = bench.attack_trial(arch, seed, NoiseSetting { kind, variance }, 1)?;
        Ok(SweepRow {
            kind,
            variance,
            seed,
            peak_psnr: r.peak_psnr,
            final_psnr: r.final_psnr,
            peak_mse: r.peak_mse,
        })
    })?;
    rows.sort_by(|a, b| {
        a.kind
            .name()
            .cmp(b.kind.name())
            .then(a.variance.total_cmp(&b.variance))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("noise_kind,variance,seed,peak_psnr,final_psnr,peak_mse\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{},{:.17e},{:.17e},{:.17e}",
            r.kind.name(),
            r.variance,
            r.seed,
            r.peak_psnr,
            r.final_psnr,
            r.peak_mse
        );
    }
    out
}

/// Mean peak PSNR per variance for one noise kind, in the order given.
pub fn mean_peak_by_variance(rows: &[SweepRow], kind: Perturbation, variances: &[f64]) -> Vec<f64> {
    variances
        .iter()
        .map(|&v| {
            let sel: Vec<f64> = rows
                .iter()
                .filter(|r| r.kind == kind && r.variance == v)
                .map(|r| r.peak_psnr)
                .collect();
            mean(&sel)
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
