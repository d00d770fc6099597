//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use ggss_lab::autodiff::{grad_check, relative_error, Graph, Var};
use ggss_lab::models::{Architecture, AttackedModel, ClientLoss, Label, ModelSpec};
use ggss_lab::rng::SeededRng;
use ggss_lab::{Result, Tensor};

/// Points per primitive in the finite-difference sweep.
pub const FD_POINTS: usize = 20;
pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

type Prim = fn(&mut Graph, Var, &Tensor) -> Result<Var>;

/// `(name, op, input shape, positive-only domain)`. The tensor argument is a
/// random constant used as the second operand where one is needed.
pub fn primitives() -> Vec<(&'static str, Prim, Vec<usize>, bool)> {
    fn c(g: &mut Graph, k: &Tensor) -> Var {
        g.constant(k.clone())
    }
    vec![
        ("add", |g, x, k| { let b = c(g, k); g.add(x, b) }, vec![6], false),
        ("add_rhs", |g, x, k| { let a = c(g, k); g.add(a, x) }, vec![6], false),
        ("sub", |g, x, k| { let b = c(g, k); g.sub(x, b) }, vec![6], false),
        ("sub_rhs", |g, x, k| { let a = c(g, k); g.sub(a, x) }, vec![6], false),
        ("mul", |g, x, k| { let b = c(g, k); g.mul(x, b) }, vec![6], false),
        ("mul_self", |g, x, _| g.mul(x, x), vec![6], false),
        ("div", |g, x, k| { let b = c(g, &k.map(|v| v.abs() + 0.5)); g.div(x, b) }, vec![6], false),
        ("div_rhs", |g, x, k| { let a = c(g, k); g.div(a, x) }, vec![6], true),
        ("scale", |g, x, _| g.scale(x, -1.7), vec![6], false),
        ("neg", |g, x, _| g.neg(x), vec![6], false),
        ("add_const", |g, x, _| g.add_const(x, 0.3), vec![6], false),
        ("matmul_lhs", |g, x, k| {
            let x = g.reshape(x, &[2, 3])?;
            let b = c(g, &k.reshaped(&[3, 2])?);
            g.matmul(x, b)
        }, vec![6], false),
        ("matmul_rhs", |g, x, k| {
            let x = g.reshape(x, &[3, 2])?;
            let a = c(g, &k.reshaped(&[2, 3])?);
            g.matmul(a, x)
        }, vec![6], false),
        ("transpose", |g, x, _| { let x = g.reshape(x, &[2, 3])?; g.transpose(x) }, vec![6], false),
        ("relu", |g, x, _| g.relu(x), vec![6], false),
        ("sigmoid", |g, x, _| g.sigmoid(x), vec![6], false),
        ("silu", |g, x, _| g.silu(x), vec![6], false),
        ("sum", |g, x, _| { let s = g.sum(x)?; g.square(s) }, vec![6], false),
        ("mean", |g, x, _| { let s = g.mean(x)?; g.exp(s) }, vec![6], false),
        ("expand", |g, x, _| { let s = g.sum(x)?; g.expand(s, &[3, 2]) }, vec![6], false),
        ("norm", |g, x, _| g.norm(x), vec![6], false),
        ("square", |g, x, _| g.square(x), vec![6], false),
        ("sqrt", |g, x, _| g.sqrt(x), vec![6], true),
        ("exp", |g, x, _| g.exp(x), vec![6], false),
        ("log", |g, x, _| g.log(x), vec![6], true),
        ("softmax", |g, x, _| g.softmax(x), vec![6], false),
        ("softmax_cross_entropy", |g, x, _| g.softmax_cross_entropy(x, 2), vec![6], false),
        ("reshape", |g, x, _| g.reshape(x, &[3, 2]), vec![6], false),
        ("concat", |g, x, k| {
            let x = g.reshape(x, &[2, 3])?;
            let b = c(g, &k.reshaped(&[2, 3])?);
            let y = g.concat(&[b, x, x], 1)?;
            g.concat(&[y, y], 0)
        }, vec![6], false),
        ("narrow", |g, x, _| { let x = g.reshape(x, &[2, 3])?; g.narrow(x, 1, 1, 2) }, vec![6], false),
        ("pad", |g, x, _| { let x = g.reshape(x, &[2, 3])?; g.pad(x, 0, 1, 4) }, vec![6], false),
    ]
}

/// Largest relative error of one primitive over [`FD_POINTS`] random points.
/// The primitive's output is contracted with a random weight so every output
/// entry contributes.
pub fn primitive_error(op: Prim, shape: &[usize], positive: bool, seed: u64) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..FD_POINTS {
        let len: usize = shape.iter().product();
        let mut point = rng.normal_tensor(shape);
        if positive {
            point = point.map(|v| v.abs() + 0.2);
        }
        let k = rng.normal_tensor(&[len]);
        let probe = {
            let mut g = Graph::new();
            let x = g.leaf(point.clone());
            let y = op(&mut g, x, &k)?;
            g.value(y).shape().to_vec()
        };
        let w = rng.normal_tensor(&probe);
        let err = grad_check(
            |g, x| {
                let y = op(g, x, &k)?;
                let w = g.constant(w.clone());
                let p = g.mul(y, w)?;
                g.sum(p)
            },
            &point,
            FD_STEP,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

pub fn zoo_model(arch: Architecture, loss: ClientLoss, seed: u64) -> AttackedModel {
    let classes = 4;
    let label = match loss {
        ClientLoss::CrossEntropy => Label::Class(seed as usize % classes),
        _ => Label::Target(SeededRng::derived(seed, 99).normal_tensor(&[classes])),
    };
    AttackedModel::build(ModelSpec::new(arch, 64, classes), loss, label, seed).unwrap()
}

pub fn loss_value(model: &AttackedModel, x: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let params = model.param_leaves(&mut g);
    let l = model.client_loss(&mut g, xv, &params, model.label())?;
    Ok(g.value(l).item())
}

/// Relative error of the client gradient against central differences in
/// every parameter.
pub fn client_gradient_error(model: &AttackedModel, x: &Tensor) -> Result<f64> {
    let analytic = model.client_gradient(x, model.label())?.values;
    let mut numeric = Vec::with_capacity(analytic.len());
    let base = model.params().to_vec();
    for (pi, (_, t)) in base.iter().enumerate() {
        for e in 0..t.len() {
            let at = |delta: f64| -> Result<f64> {
                let mut params = base.clone();
                params[pi].1.data_mut()[e] += delta;
                let m = AttackedModel::with_params(model.spec(), model.loss(), model.label().clone(), params)?;
                loss_value(&m, x)
            };
            numeric.push((at(FD_STEP)? - at(-FD_STEP)?) / (2.0 * FD_STEP));
        }
    }
    Ok(relative_error(analytic.data(), &numeric))
}

/// Relative error of `∇_x vᵀg(x)`, which needs a second backward pass,
/// against central differences of `vᵀ client_gradient(x)`.
pub fn double_backward_error(model: &AttackedModel, x: &Tensor, v: &Tensor) -> Result<f64> {
    let label = model.label().clone();
    let analytic = model.projected_gradient_input_grad(x, &label, v)?;
    let mut numeric = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[k] += FD_STEP;
        let mut minus = x.clone();
        minus.data_mut()[k] -= FD_STEP;
        let fp = model.client_gradient(&plus, &label)?.values.dot(v);
        let fm = model.client_gradient(&minus, &label)?.values.dot(v);
        numeric.push((fp - fm) / (2.0 * FD_STEP));
    }
    Ok(relative_error(analytic.data(), &numeric))
}

use ggss_lab::attack::{attack_loss, AttackContext};
use ggss_lab::diffusion::{ddim_mean_nodes, Denoiser, GaussianMixture};

/// `ℒ(x_t) = ‖g(x̂_0(x_t)) − g_leaked‖` without differentiating.
pub fn loss_at(ctx: &AttackContext<'_>, x_t: &Tensor, t: usize) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.constant(x_t.clone());
    let nodes = ddim_mean_nodes(&mut g, x, t, ctx.sched, ctx.denoiser, ctx.mode)?;
    let grad = ctx.model.gradient_node(&mut g, nodes.x0_hat, ctx.model.label())?;
    let leaked = g.constant(ctx.leaked.values.clone());
    let l = attack_loss(&mut g, grad, leaked)?;
    Ok(g.value(l).item())
}

/// Isotropic Gaussian prior over 8×8 images centred at mid-grey.
pub fn grey_oracle(variance: f64) -> Denoiser {
    Denoiser::oracle(GaussianMixture::single(Tensor::full(&[64], 0.5), variance).unwrap())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliRun {
    /// The run directory printed on success.
    pub fn run_dir(&self) -> PathBuf {
        PathBuf::from(self.stdout.trim())
    }
}

pub fn run_cli(args: &[&str]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_ggss-lab"))
        .args(args)
        .output()
        .expect("binary runs");
    CliRun {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Runs `command` with a config file holding `config`, writing under `out`.
pub fn run_with_config(command: &str, config: &str, out: &Path, extra: &[&str]) -> CliRun {
    let cfg = out.join(format!("{command}.cfg"));
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(&cfg, config).unwrap();
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run_cli(&args)
}

/// Contents of every `.csv` file in a run directory, by file name.
pub fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

/// A small denoiser checkpoint trained through the CLI, with its config.
pub fn small_denoiser(out: &Path) -> (PathBuf, String) {
    let base = "steps = 20\nepochs = 30\ntrain_images = 64\n";
    let run = run_with_config("train-denoiser", base, out, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let ckpt = run.run_dir().join("denoiser.ckpt");
    let cfg = format!("{base}denoiser = {}\n", ckpt.display());
    (ckpt, cfg)
}
