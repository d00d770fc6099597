//! Command-line experiment runner. Every command resolves its config, makes a
//! fresh run directory, writes a manifest and its artifacts there, and
//! reports an exit status.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::analysis::summary_csv;
use crate::attack::AttackTrace;
use crate::config::{keys_help, ExperimentConfig};
use crate::data::shapes_dataset;
use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::experiment::{noise_sweep, run_parallel, sweep_csv, Benchmark, NoiseSetting, TrialResult};
use crate::models::{Architecture, AttackedModel, ClientLoss, Label, ModelSpec};
use crate::rng::SeededRng;
use crate::validate::{fit_single_gaussian, run_validators};
use crate::vulnerability::{estimate_rv, rv_csv, RvRow};

/// RNG stream of the RV direction draws within a seed.
const RV_STREAM: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Train the diffusion prior; writes denoiser.ckpt and loss.csv.
    TrainDenoiser,
    /// Attack one configured gradient per seed; writes traces and snapshots.
    Attack,
    /// Attack over the defense × variance × seed grid; writes sweep.csv.
    SweepNoise,
    /// Reconstruction vulnerability of every zoo model; writes rv.csv.
    Rv,
    /// Run the empirical checks; writes reports.txt and summary.csv.
    VerifyTheorems,
    /// Pixel-space gradient matching with the attack's budget.
    Baseline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TrainDenoiser => "train-denoiser",
            Command::Attack => "attack",
            Command::SweepNoise => "sweep-noise",
            Command::Rv => "rv",
            Command::VerifyTheorems => "verify-theorems",
            Command::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ggss-lab",
    version,
    about = "Gradient inversion via gradient-guided diffusion sampling",
    after_help = keys_help()
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Trial seed; repeat for several. Replaces `seeds` from the config.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Parent of the run directory. Replaces `out` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Exit statuses.
pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_THEOREM: u8 = 3;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite { .. } | Error::NumericAbort { .. } | Error::Diverged { .. } => EXIT_NUMERIC,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    /// Ids of failed checks; only `verify-theorems` fills it.
    pub failed_checks: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.failed_checks.is_empty() {
            EXIT_OK
        } else {
            EXIT_THEOREM
        }
    }
}

/// Config file plus command-line overrides.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&cli.config)?;
    let mut cfg = crate::config::parse_str(&text)?;
    if let Some(written_by) = text
        .lines()
        .filter_map(|l| l.split('#').next()?.split_once('='))
        .find(|(k, _)| k.trim() == "command")
        .map(|(_, v)| v.trim().to_string())
    {
        if !written_by.is_empty() && written_by != cli.command.name() {
            return Err(Error::invalid(format!(
                "config was written by `{written_by}`, not `{}`",
                cli.command.name()
            )));
        }
    }
    if !cli.seeds.is_empty() {
        cfg.seeds = cli.seeds.clone();
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if cli.jobs == 0 {
        return Err(Error::invalid("--jobs must be at least 1"));
    }
    Ok(cfg)
}

/// Creates `<parent>/<command>-<timestamp>`, adding a numeric suffix rather
/// than reusing an existing directory.
pub fn create_run_dir(parent: &Path, command: Command) -> Result<PathBuf> {
    fs::create_dir_all(parent)?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
    let base = format!("{}-{stamp}", command.name());
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Loads the configured checkpoint, or trains one and stores it in the run.
fn obtain_benchmark(cfg: &ExperimentConfig, dir: &Path, notes: &mut String) -> Result<Benchmark> {
    match &cfg.denoiser {
        Some(path) => {
            let den = Denoiser::from_checkpoint(&fs::read_to_string(path)?)?;
            Benchmark::with_denoiser(cfg.bench.clone(), den)
        }
        None => {
            let (bench, losses) = Benchmark::train(cfg.bench.clone())?;
            fs::write(dir.join("denoiser.ckpt"), bench.denoiser().to_checkpoint()?)?;
            fs::write(dir.join("denoiser_loss.csv"), loss_csv(&losses))?;
            notes.push_str("denoiser trained in this run: denoiser.ckpt\n");
            Ok(bench)
        }
    }
}

fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{e},{l:.17e}");
    }
    out
}

fn snapshots_csv(trace: &AttackTrace) -> String {
    let n = trace.reconstruction.len();
    let mut out = String::from("t");
    for i in 0..n {
        let _ = write!(out, ",p{i}");
    }
    out.push('\n');
    let rows = trace
        .snapshots
        .iter()
        .map(|(t, x)| (t.to_string(), x))
        .chain(std::iter::once(("final".to_string(), &trace.reconstruction)));
    for (t, x) in rows {
        out.push_str(&t);
        for v in x.data() {
            let _ = write!(out, ",{v:.17e}");
        }
        out.push('\n');
    }
    out
}

fn trials_csv(results: &[TrialResult]) -> String {
    let mut out = String::from("seed,peak_psnr,final_psnr,peak_mse,final_mse,gradient_evaluations,flagged_steps\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
            r.seed,
            r.peak_psnr,
            r.final_psnr,
            r.peak_mse,
            r.trace.final_mse,
            r.trace.gradient_evaluations,
            r.trace.flagged_steps.len()
        );
    }
    out
}

fn write_trials(dir: &Path, results: &[TrialResult]) -> Result<()> {
    for r in results {
        fs::write(dir.join(format!("trace_seed{}.csv", r.seed)), r.trace.to_csv())?;
        fs::write(dir.join(format!("snapshots_seed{}.csv", r.seed)), snapshots_csv(&r.trace))?;
    }
    fs::write(dir.join("summary.csv"), trials_csv(results))?;
    Ok(())
}

fn noise_setting(cfg: &ExperimentConfig) -> NoiseSetting {
    NoiseSetting {
        kind: cfg.noise_kind,
        variance: cfg.noise_variance,
    }
}

/// RV of each zoo model for each seed on held-out shapes, zoo-major.
pub fn rv_rows(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<RvRow>> {
    let b = &cfg.bench;
    let data = shapes_dataset(cfg.rv_n, b.side, b.target_seed);
    let labels: Vec<Label> = (0..cfg.rv_n).map(|i| Label::Class(i % b.num_classes)).collect();
    let cells: Vec<(Architecture, u64)> = Architecture::ZOO
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    run_parallel(&cells, jobs, |&(arch, seed)| {
        let spec = ModelSpec::new(arch, b.dim(), b.num_classes);
        let model = AttackedModel::build(spec, ClientLoss::CrossEntropy, labels[0].clone(), seed)?;
        let mut rng = SeededRng::derived(seed, RV_STREAM);
        let estimate = estimate_rv(&model, &data, &labels, cfg.rv_m, cfg.rv_n, &mut rng)?;
        Ok(RvRow {
            model: arch.name().to_string(),
            estimate,
            seed,
        })
    })
}

/// Executes `cli.command`. Errors map to exit codes through [`exit_code`].
pub fn run(cli: &Cli) -> Result<RunOutcome> {
    let cfg = resolve(cli)?;
    let dir = create_run_dir(&cfg.out, cli.command)?;
    fs::write(dir.join("manifest.txt"), cfg.to_manifest(cli.command.name()))?;
    let mut notes = String::new();
    let mut failed_checks = Vec::new();
    let jobs = cli.jobs;
    match cli.command {
        Command::TrainDenoiser => {
            let (bench, losses) = Benchmark::train(cfg.bench.clone())?;
            fs::write(dir.join("denoiser.ckpt"), bench.denoiser().to_checkpoint()?)?;
            fs::write(dir.join("loss.csv"), loss_csv(&losses))?;
        }
        Command::Attack => {
            let bench = obtain_benchmark(&cfg, &dir, &mut notes)?;
            let noise = noise_setting(&cfg);
            let results = run_parallel(&cfg.seeds, jobs, |&seed| {
                bench.attack_trial(cfg.model, seed, noise, cfg.batch_size)
            })?;
            write_trials(&dir, &results)?;
        }
        Command::Baseline => {
            // The pixel-space baseline never queries the prior, so a fitted
            // Gaussian stands in for a trained denoiser.
            let prior = fit_single_gaussian(&cfg.bench.training_set())?;
            let bench = Benchmark::with_denoiser(cfg.bench.clone(), Denoiser::oracle(prior))?;
            let noise = noise_setting(&cfg);
            let results = run_parallel(&cfg.seeds, jobs, |&seed| {
                bench.dlg_trial(cfg.model, seed, noise, cfg.batch_size)
            })?;
            write_trials(&dir, &results)?;
        }
        Command::SweepNoise => {
            let bench = obtain_benchmark(&cfg, &dir, &mut notes)?;
            let rows = noise_sweep(&bench, cfg.model, &cfg.noise_kinds, &cfg.variances, &cfg.seeds, jobs)?;
            fs::write(dir.join("sweep.csv"), sweep_csv(&rows))?;
        }
        Command::Rv => {
            fs::write(dir.join("rv.csv"), rv_csv(&rv_rows(&cfg, jobs)?))?;
        }
        Command::VerifyTheorems => {
            let bench = obtain_benchmark(&cfg, &dir, &mut notes)?;
            let mut vc = cfg.validate_config();
            vc.jobs = jobs;
            let reports = run_validators(&bench, &vc)?;
            let text = reports.iter().map(|r| r.to_text()).collect::<Vec<_>>().join("\n");
            fs::write(dir.join("reports.txt"), text)?;
            fs::write(dir.join("summary.csv"), summary_csv(&reports))?;
            failed_checks = reports.iter().filter(|r| !r.pass).map(|r| r.id.clone()).collect();
        }
    }
    if !notes.is_empty() {
        fs::write(dir.join("notes.txt"), notes)?;
    }
    Ok(RunOutcome {
        run_dir: dir,
        failed_checks,
    })
}
