//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are separated by
//! spaces or commas. Every key is optional and falls back to the default in
//! [`KEYS`]. A manifest written by a run is itself a valid config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::diffusion::TrainConfig;
use crate::error::{Error, Result};
use crate::experiment::BenchmarkConfig;
use crate::models::{Architecture, Perturbation};
use crate::validate::ValidateConfig;

/// Version of the on-disk artifact layout.
pub const FORMAT_VERSION: u32 = 1;

/// `(key, default, meaning)` for every recognized key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("format_version", "1", "artifact format version; must match the tool"),
    ("command", "", "command that wrote a manifest; ignored unless it conflicts"),
    ("seeds", "0", "trial seeds; overridden by --seed"),
    ("out", "runs", "parent of the run directories; overridden by --out"),
    ("side", "8", "image side length"),
    ("train_images", "512", "size of the shape training set"),
    ("data_seed", "0", "seed of the training set"),
    ("target_seed", "1", "seed of the held-out targets"),
    ("num_classes", "10", "classifier outputs"),
    ("steps", "100", "reverse diffusion steps T"),
    ("eta", "0.5", "DDIM stochasticity in [0, 1]"),
    ("m_r", "0.20", "guidance rate in [0, 1]"),
    ("step_size", "auto", "spherical radius: auto (√n σ_t) or a positive number"),
    ("posterior", "consistent", "posterior-mean noise coefficient: consistent or unrooted"),
    ("denoiser", "", "checkpoint path; empty trains one in the run"),
    ("epochs", "2000", "denoiser training epochs"),
    ("lr", "1e-3", "denoiser learning rate"),
    ("train_seed", "0", "denoiser initialization and noise seed"),
    ("model", "cnn-tiny", "attacked architecture"),
    ("noise_kind", "none", "defense for attack/baseline: none, gaussian or laplacian"),
    ("noise_variance", "0", "defense variance"),
    ("batch_size", "1", "images averaged into the shared gradient"),
    ("noise_kinds", "gaussian laplacian", "defenses swept by sweep-noise"),
    ("variances", "1e-4 1e-3 1e-2 1e-1", "variances swept by sweep-noise and verify-theorems"),
    ("rv_m", "1000", "random parameter directions M"),
    ("rv_n", "310", "samples N"),
    ("dlg_lr", "0.1", "initial step of the pixel-space baseline"),
    ("lm_samples", "20000", "draws per concentration check"),
    ("jensen_samples", "2000", "posterior draws per Jensen gap estimate"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub bench: BenchmarkConfig,
    pub denoiser: Option<PathBuf>,
    pub model: Architecture,
    pub noise_kind: Perturbation,
    pub noise_variance: f64,
    pub batch_size: usize,
    pub noise_kinds: Vec<Perturbation>,
    pub variances: Vec<f64>,
    pub rv_m: usize,
    pub rv_n: usize,
    pub lm_samples: usize,
    pub jensen_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_str("").expect("defaults parse")
    }
}

fn field<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("`{value}` is not a valid value for `{key}`"),
    })
}

fn list<T: FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| field(key, s, line))
        .collect()
}

fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    let mut unknown = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "missing key".into(),
            });
        }
        if !KEYS.iter().any(|(name, _, _)| *name == k) {
            unknown.push((line, k.to_string()));
            continue;
        }
        if let Some((first, _, _)) = out.iter().find(|(_, name, _)| name == k) {
            return Err(Error::Parse {
                line,
                msg: format!("`{k}` already set on line {first}"),
            });
        }
        out.push((line, k.to_string(), v.to_string()));
    }
    if let Some(&(line, _)) = unknown.first() {
        let names: Vec<String> = unknown.iter().map(|(l, k)| format!("`{k}` (line {l})")).collect();
        return Err(Error::Parse {
            line,
            msg: format!("unknown keys: {}", names.join(", ")),
        });
    }
    Ok(out)
}

/// Parses config text; missing keys take their documented defaults.
pub fn parse_str(text: &str) -> Result<ExperimentConfig> {
    let given = parse_lines(text)?;
    let lookup = |key: &str| -> (usize, String) {
        given
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(l, _, v)| (*l, v.clone()))
            .unwrap_or_else(|| {
                let d = KEYS.iter().find(|(k, _, _)| *k == key).expect("key in table");
                (0, d.1.to_string())
            })
    };
    macro_rules! get {
        ($key:literal) => {{
            let (line, v) = lookup($key);
            field($key, &v, line)?
        }};
    }
    macro_rules! get_list {
        ($key:literal) => {{
            let (line, v) = lookup($key);
            (line, list($key, &v, line)?)
        }};
    }
    let range_err = |key: &str, msg: &str| {
        let (line, v) = lookup(key);
        Error::Parse {
            line,
            msg: format!("`{key} = {v}`: {msg}"),
        }
    };

    let version: u32 = get!("format_version");
    if version != FORMAT_VERSION {
        return Err(range_err("format_version", &format!("this tool writes version {FORMAT_VERSION}")));
    }
    let (seeds_line, seeds) = get_list!("seeds");
    if seeds.is_empty() {
        return Err(Error::Parse {
            line: seeds_line,
            msg: "seed list is empty".into(),
        });
    }
    let denoiser = {
        let (_, v) = lookup("denoiser");
        (!v.is_empty()).then(|| PathBuf::from(v))
    };
    let bench = BenchmarkConfig {
        side: get!("side"),
        train_images: get!("train_images"),
        data_seed: get!("data_seed"),
        target_seed: get!("target_seed"),
        num_classes: get!("num_classes"),
        steps: get!("steps"),
        eta: get!("eta"),
        guidance_rate: get!("m_r"),
        step_size: get!("step_size"),
        mode: get!("posterior"),
        train: TrainConfig {
            epochs: get!("epochs"),
            lr: get!("lr"),
            seed: get!("train_seed"),
        },
        dlg_lr: get!("dlg_lr"),
    };
    let cfg = ExperimentConfig {
        seeds,
        out: PathBuf::from(lookup("out").1),
        bench,
        denoiser,
        model: get!("model"),
        noise_kind: get!("noise_kind"),
        noise_variance: get!("noise_variance"),
        batch_size: get!("batch_size"),
        noise_kinds: get_list!("noise_kinds").1,
        variances: get_list!("variances").1,
        rv_m: get!("rv_m"),
        rv_n: get!("rv_n"),
        lm_samples: get!("lm_samples"),
        jensen_samples: get!("jensen_samples"),
    };

    let checks: [(&str, bool, &str); 14] = [
        ("noise_variance", cfg.noise_variance >= 0.0 && cfg.noise_variance.is_finite(), "must be a finite non-negative number"),
        ("variances", !cfg.variances.is_empty() && cfg.variances.iter().all(|v| *v >= 0.0 && v.is_finite()), "must be finite non-negative numbers"),
        ("noise_kinds", !cfg.noise_kinds.is_empty(), "must list at least one defense"),
        ("m_r", (0.0..=1.0).contains(&cfg.bench.guidance_rate), "must lie in [0, 1]"),
        ("eta", (0.0..=1.0).contains(&cfg.bench.eta), "must lie in [0, 1]"),
        ("steps", cfg.bench.steps >= 1, "must be at least 1"),
        ("batch_size", cfg.batch_size >= 1, "must be at least 1"),
        ("rv_m", cfg.rv_m >= 1, "must be at least 1"),
        ("rv_n", cfg.rv_n >= 1, "must be at least 1"),
        ("epochs", cfg.bench.train.epochs >= 1, "must be at least 1"),
        ("lr", cfg.bench.train.lr > 0.0 && cfg.bench.train.lr.is_finite(), "must be positive"),
        ("dlg_lr", cfg.bench.dlg_lr > 0.0 && cfg.bench.dlg_lr.is_finite(), "must be positive"),
        ("train_images", cfg.bench.train_images >= 1, "must be at least 1"),
        ("lm_samples", cfg.lm_samples >= 10_000, "must be at least 10000"),
    ];
    for (key, ok, msg) in checks {
        if !ok {
            return Err(range_err(key, msg));
        }
    }
    if cfg.jensen_samples < 1000 {
        return Err(range_err("jensen_samples", "must be at least 1000"));
    }
    cfg.bench.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_str(&std::fs::read_to_string(path)?)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

impl ExperimentConfig {
    pub fn validate_config(&self) -> ValidateConfig {
        ValidateConfig {
            seeds: self.seeds.clone(),
            lm_samples: self.lm_samples,
            jensen_samples: self.jensen_samples,
            variances: self.variances.clone(),
            ..ValidateConfig::default()
        }
    }

    /// Every key with its resolved value, in [`KEYS`] order, as config text.
    pub fn to_manifest(&self, command: &str) -> String {
        let b = &self.bench;
        let value = |key: &str| -> String {
            match key {
                "format_version" => FORMAT_VERSION.to_string(),
                "command" => command.to_string(),
                "seeds" => join(&self.seeds),
                "out" => self.out.display().to_string(),
                "side" => b.side.to_string(),
                "train_images" => b.train_images.to_string(),
                "data_seed" => b.data_seed.to_string(),
                "target_seed" => b.target_seed.to_string(),
                "num_classes" => b.num_classes.to_string(),
                "steps" => b.steps.to_string(),
                "eta" => b.eta.to_string(),
                "m_r" => b.guidance_rate.to_string(),
                "step_size" => b.step_size.to_string(),
                "posterior" => b.mode.name().to_string(),
                "denoiser" => self.denoiser.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                "epochs" => b.train.epochs.to_string(),
                "lr" => b.train.lr.to_string(),
                "train_seed" => b.train.seed.to_string(),
                "model" => self.model.name().to_string(),
                "noise_kind" => self.noise_kind.name().to_string(),
                "noise_variance" => self.noise_variance.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "noise_kinds" => self.noise_kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(" "),
                "variances" => join(&self.variances),
                "rv_m" => self.rv_m.to_string(),
                "rv_n" => self.rv_n.to_string(),
                "dlg_lr" => b.dlg_lr.to_string(),
                "lm_samples" => self.lm_samples.to_string(),
                "jensen_samples" => self.jensen_samples.to_string(),
                _ => unreachable!("key table and manifest out of sync: {key}"),
            }
        };
        let mut out = String::new();
        for (key, _, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", value(key));
        }
        out
    }
}

/// The key table as help text.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (key = default: meaning):\n");
    for (k, d, m) in KEYS {
        let d = if d.is_empty() { "\"\"" } else { d };
        let _ = writeln!(out, "  {k} = {d}: {m}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply() {
        let c = parse_str("# nothing\n\n").unwrap();
        assert_eq!(c.bench, BenchmarkConfig::default());
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.denoiser, None);
        assert_eq!(c.variances, vec![1e-4, 1e-3, 1e-2, 1e-1]);
    }

    #[test]
    fn guidance_rate_key() {
        let c = parse_str("m_r = 0.20  # blend\n").unwrap();
        assert_eq!(c.bench.guidance_rate, 0.20);
    }

    #[test]
    fn negative_variance_is_rejected_with_its_line() {
        let e = parse_str("seeds = 1\nnoise_variance = -1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn unknown_and_malformed_lines() {
        let e = parse_str("steps = 10\nbogus = 3\nother = 1\n").unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(msg.contains("bogus") && msg.contains("other"), "{msg}");
        assert!(matches!(parse_str("steps 10").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(parse_str("\nsteps = ten").unwrap_err(), Error::Parse { line: 2, .. }));
        assert!(matches!(parse_str("steps = 1\nsteps = 2").unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn manifest_round_trips() {
        let c = parse_str("seeds = 3, 4\nstep_size = 0.5\nmodel = mlp-3\ndenoiser = d.ckpt\n").unwrap();
        let again = parse_str(&c.to_manifest("attack")).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_manifest("attack").lines().count(), KEYS.len());
    }
}
