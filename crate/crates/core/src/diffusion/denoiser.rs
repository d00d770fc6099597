//! Noise predictors `ε_θ(x_t, t)`: a small trained MLP and the analytic
//! mixture oracle.

use crate::autodiff::{Graph, Var};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::mixture::GaussianMixture;
use super::schedule::NoiseSchedule;

pub const TIME_EMBED_DIM: usize = 16;
pub const HIDDEN: usize = 128;

/// Assumed data scale in the output preconditioning.
pub const SIGMA_DATA: f64 = 0.5;

/// Row coefficients `(a, b)` with `ε_θ = a x_t − b F(x_t, t)`.
///
/// Writing `y = x_t/√α` and `s = √((1−α)/α)`, the network output `F` is
/// read as a clean-image estimate `D = c_skip y + c_out F` with
/// `c_skip = σ_d²/(s²+σ_d²)`, `c_out = s σ_d/√(s²+σ_d²)`, and
/// `ε_θ = (y − D)/s`. Errors in `F` then stay bounded both in `ε_θ` and in
/// `x̂_0`, instead of being amplified by `1/√α` at high noise.
pub fn output_coefficients(alpha: f64) -> (f64, f64) {
    let s2 = (1.0 - alpha) / alpha;
    let c = s2 + SIGMA_DATA * SIGMA_DATA;
    (s2.sqrt() / (c * alpha.sqrt()), SIGMA_DATA / c.sqrt())
}

/// Sinusoidal features of `t / T` at octave-spaced frequencies.
pub fn time_embedding(t: usize, steps: usize, dim: usize) -> Vec<f64> {
    let s = t as f64 / steps as f64;
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for k in 0..half {
        let freq = std::f64::consts::PI * (1u64 << k) as f64 / 2.0;
        out.push((freq * s).sin());
    }
    for k in 0..half {
        let freq = std::f64::consts::PI * (1u64 << k) as f64 / 2.0;
        out.push((freq * s).cos());
    }
    out
}

/// MLP `[n + 16 → 128 → 128 → n]` with SiLU activations, followed by the
/// fixed preconditioning of [`output_coefficients`]. Weights are stored
/// `[in, out]` so batches multiply from the left.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    params: Vec<(String, Tensor)>,
    dim: usize,
}

const PARAM_NAMES: [&str; 6] = ["l0.weight", "l0.bias", "l1.weight", "l1.bias", "l2.weight", "l2.bias"];

impl MlpDenoiser {
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let widths = [dim + TIME_EMBED_DIM, HIDDEN, HIDDEN, dim];
        let mut params = Vec::with_capacity(6);
        for (l, w) in widths.windows(2).enumerate() {
            let std = 1.0 / (w[0] as f64).sqrt();
            params.push((PARAM_NAMES[2 * l].to_string(), rng.normal_tensor(&[w[0], w[1]]).scale(std)));
            params.push((PARAM_NAMES[2 * l + 1].to_string(), Tensor::zeros(&[w[1]])));
        }
        Self { params, dim }
    }

    pub fn from_params(params: Vec<(String, Tensor)>) -> Result<Self> {
        let names: Vec<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
        if names != PARAM_NAMES {
            return Err(Error::invalid(format!("unexpected denoiser parameters {names:?}")));
        }
        let dim = params[5].1.len();
        let in_dim = dim + TIME_EMBED_DIM;
        let expected: [&[usize]; 6] = [&[in_dim, HIDDEN], &[HIDDEN], &[HIDDEN, HIDDEN], &[HIDDEN], &[HIDDEN, dim], &[dim]];
        for ((name, t), shape) in params.iter().zip(expected) {
            if t.shape() != shape {
                return Err(Error::invalid(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { params, dim })
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Batched prediction for rows of `x` (`[B, n]`) at per-row timesteps.
    pub fn forward_batch(
        &self,
        g: &mut Graph,
        x: Var,
        ts: &[usize],
        sched: &NoiseSchedule,
        params: &[Var],
    ) -> Result<Var> {
        let batch = ts.len();
        let steps = sched.steps();
        let emb: Vec<f64> = ts
            .iter()
            .flat_map(|&t| time_embedding(t, steps, TIME_EMBED_DIM))
            .collect();
        let emb = g.constant(Tensor::matrix(batch, TIME_EMBED_DIM, emb)?);
        let ones = g.constant(Tensor::full(&[batch, 1], 1.0));
        let mut h = g.concat(&[x, emb], 1)?;
        for l in 0..3 {
            let z = g.matmul(h, params[2 * l])?;
            let width = g.shape(params[2 * l + 1])[0];
            let b = g.reshape(params[2 * l + 1], &[1, width])?;
            let b = g.matmul(ones, b)?;
            h = g.add(z, b)?;
            if l < 2 {
                h = g.silu(h)?;
            }
        }
        let (mut a, mut b) = (Vec::with_capacity(batch * self.dim), Vec::with_capacity(batch * self.dim));
        for &t in ts {
            let (ca, cb) = output_coefficients(sched.alpha(t));
            a.extend(std::iter::repeat(ca).take(self.dim));
            b.extend(std::iter::repeat(cb).take(self.dim));
        }
        let a = g.constant(Tensor::matrix(batch, self.dim, a)?);
        let b = g.constant(Tensor::matrix(batch, self.dim, b)?);
        let skip = g.mul(x, a)?;
        let out = g.mul(h, b)?;
        g.sub(skip, out)
    }
}

/// Either a trained network or the exact oracle for a known mixture.
#[derive(Debug, Clone, PartialEq)]
pub enum Denoiser {
    Mlp(MlpDenoiser),
    Oracle(GaussianMixture),
}

impl Denoiser {
    pub fn oracle(mixture: GaussianMixture) -> Self {
        Denoiser::Oracle(mixture)
    }

    pub fn dim(&self) -> usize {
        match self {
            Denoiser::Mlp(m) => m.dim(),
            Denoiser::Oracle(gm) => gm.dim(),
        }
    }

    /// `ε_θ(x_t, t)` as a node of the same shape as `x_t`.
    pub fn predict(&self, g: &mut Graph, x_t: Var, t: usize, sched: &NoiseSchedule) -> Result<Var> {
        sched.check_step(t)?;
        let shape = g.shape(x_t).to_vec();
        if g.value(x_t).len() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "denoiser input",
                lhs: vec![self.dim()],
                rhs: shape,
            });
        }
        match self {
            Denoiser::Mlp(m) => {
                let params: Vec<Var> = m.params.iter().map(|(_, t)| g.leaf(t.clone())).collect();
                let row = g.reshape(x_t, &[1, m.dim])?;
                let out = m.forward_batch(g, row, &[t], sched, &params)?;
                g.reshape(out, &shape)
            }
            Denoiser::Oracle(gm) => gm.epsilon_node(g, x_t, sched.alpha(t)),
        }
    }

    pub fn predict_value(&self, x_t: &Tensor, t: usize, sched: &NoiseSchedule) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.leaf(x_t.clone());
        let e = self.predict(&mut g, x, t, sched)?;
        Ok(g.evaluate(e))
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        match self {
            Denoiser::Mlp(m) => Ok(checkpoint::to_text(&m.params)),
            Denoiser::Oracle(_) => Err(Error::invalid("oracle denoisers have no checkpoint")),
        }
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        Ok(Denoiser::Mlp(MlpDenoiser::from_params(checkpoint::from_text(text)?)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedDenoiser {
    pub denoiser: Denoiser,
    /// Full-batch loss at the start of each epoch, before its update.
    pub loss_trace: Vec<f64>,
}

impl TrainedDenoiser {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.loss_trace.iter().enumerate() {
            out.push_str(&format!("{e},{l:.17e}\n"));
        }
        out
    }
}

/// Fits `ε_θ` by minimizing `mean ‖ε − ε_θ(√α_t x_0 + √(1−α_t) ε, t)‖²` over
/// the whole dataset each epoch, with fresh `t ~ U{1..T}` and `ε ~ N(0, I)`
/// per sample, using Adam.
pub fn train_denoiser(
    dataset: &[Tensor],
    sched: &NoiseSchedule,
    cfg: TrainConfig,
) -> Result<TrainedDenoiser> {
    let first = dataset.first().ok_or_else(|| Error::invalid("empty dataset"))?;
    let dim = first.len();
    if dataset.iter().any(|x| x.len() != dim) {
        return Err(Error::invalid("dataset samples must share a shape"));
    }
    if cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(Error::invalid("epochs and lr must be positive"));
    }
    let mut model = MlpDenoiser::init(dim, cfg.seed);
    let mut rng = SeededRng::derived(cfg.seed, 1);
    let mut adam = Adam::new(&model.params, cfg.lr);
    let batch = dataset.len();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let steps = sched.steps();

    for epoch in 0..cfg.epochs {
        let mut ts = Vec::with_capacity(batch);
        let mut noisy = Vec::with_capacity(batch * dim);
        let mut noise = Vec::with_capacity(batch * dim);
        for x0 in dataset {
            let t = 1 + rng.below(steps);
            let a = sched.alpha(t);
            for &v in x0.data() {
                let e = rng.normal();
                noisy.push(a.sqrt() * v + (1.0 - a).sqrt() * e);
                noise.push(e);
            }
            ts.push(t);
        }
        let mut g = Graph::new();
        let params: Vec<Var> = model.params.iter().map(|(_, t)| g.leaf(t.clone())).collect();
        let diverged = |_| Error::Diverged { epoch };
        let x = g.leaf(Tensor::matrix(batch, dim, noisy)?);
        let target = g.constant(Tensor::matrix(batch, dim, noise)?);
        let pred = model
            .forward_batch(&mut g, x, &ts, sched, &params)
            .map_err(diverged)?;
        let diff = g.sub(pred, target)?;
        let sq = g.square(diff).map_err(diverged)?;
        let loss = g.mean(sq).map_err(diverged)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(value);
        let grads = g.backward(loss, &params).map_err(diverged)?;
        adam.step(&mut model.params, &grads);
        if model.params.iter().any(|(_, t)| !t.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(TrainedDenoiser {
        denoiser: Denoiser::Mlp(model),
        loss_trace: trace,
    })
}

struct Adam {
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[(String, Tensor)], lr: f64) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            lr,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn step(&mut self, params: &mut [(String, Tensor)], grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * gj;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * gj * gj;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_has_requested_width() {
        let e = time_embedding(5, 100, TIME_EMBED_DIM);
        assert_eq!(e.len(), TIME_EMBED_DIM);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn prediction_keeps_shape() {
        let sched = NoiseSchedule::new(20, 0.0).unwrap();
        let d = Denoiser::Mlp(MlpDenoiser::init(6, 0));
        let x = Tensor::vector(vec![0.1; 6]);
        for t in [1, 10, 20] {
            assert_eq!(d.predict_value(&x, t, &sched).unwrap().shape(), &[6]);
        }
        assert!(d.predict_value(&x, 0, &sched).is_err());
        assert!(d.predict_value(&Tensor::vector(vec![0.0; 5]), 1, &sched).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let d = Denoiser::Mlp(MlpDenoiser::init(4, 3));
        let back = Denoiser::from_checkpoint(&d.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn training_rejects_bad_input() {
        let sched = NoiseSchedule::new(20, 0.0).unwrap();
        assert!(train_denoiser(&[], &sched, TrainConfig::default()).is_err());
        let ragged = [Tensor::vector(vec![0.0; 2]), Tensor::vector(vec![0.0; 3])];
        assert!(train_denoiser(&ragged, &sched, TrainConfig::default()).is_err());
    }

    #[test]
    fn huge_learning_rate_reports_divergence_epoch() {
        let sched = NoiseSchedule::new(20, 0.0).unwrap();
        let data = vec![Tensor::vector(vec![1e200; 4])];
        let cfg = TrainConfig {
            epochs: 5,
            lr: 1e-3,
            seed: 0,
        };
        match train_denoiser(&data, &sched, cfg) {
            Err(Error::Diverged { epoch }) => assert_eq!(epoch, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
