use crate::error::{Error, Result};

/// Linear β schedule endpoints at T = 1000; rescaled by 1000/T otherwise.
const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 0.02;
/// Upper clamp on β for short schedules, where the rescaled endpoint would
/// exceed 1.
const BETA_MAX: f64 = 0.999;

/// Cumulative signal coefficients `alpha[0..=T]` with `alpha[0] = 1`, and
/// DDIM noise scales `sigma[1..=T]` (`sigma[0]` is unused and zero).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    eta: f64,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(steps: usize, eta: f64) -> Result<Self> {
        if !(10..=1000).contains(&steps) {
            return Err(Error::invalid(format!("T = {steps} outside [10, 1000]")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("eta = {eta} outside [0, 1]")));
        }
        let scale = 1000.0 / steps as f64;
        let mut alpha = Vec::with_capacity(steps + 1);
        alpha.push(1.0);
        for i in 0..steps {
            let frac = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 0.0 };
            let beta = (scale * (BETA_START + (BETA_END - BETA_START) * frac)).min(BETA_MAX);
            alpha.push(alpha[i] * (1.0 - beta));
        }
        let sigma = Self::ddim_sigmas(&alpha, eta);
        Ok(Self {
            steps,
            eta,
            alpha,
            sigma,
        })
    }

    /// A schedule from explicit cumulative coefficients, used for limits
    /// and hand-built cases. `alpha[0]` must be 1 and the sequence must be
    /// non-increasing and positive.
    pub fn from_alphas(alpha: Vec<f64>, eta: f64) -> Result<Self> {
        if alpha.len() < 2 || alpha[0] != 1.0 {
            return Err(Error::invalid("alpha must start at 1 and have T >= 1"));
        }
        if alpha.windows(2).any(|w| w[1] > w[0]) || alpha.iter().any(|&a| a <= 0.0 || a > 1.0) {
            return Err(Error::invalid("alpha must be non-increasing in (0, 1]"));
        }
        let sigma = Self::ddim_sigmas(&alpha, eta);
        Ok(Self {
            steps: alpha.len() - 1,
            eta,
            alpha,
            sigma,
        })
    }

    fn ddim_sigmas(alpha: &[f64], eta: f64) -> Vec<f64> {
        let mut sigma = vec![0.0; alpha.len()];
        for t in 1..alpha.len() {
            let (a, prev) = (alpha[t], alpha[t - 1]);
            if eta == 0.0 || a >= 1.0 {
                continue;
            }
            let s = eta * ((1.0 - prev) / (1.0 - a)).sqrt() * (1.0 - a / prev).max(0.0).sqrt();
            sigma[t] = s;
        }
        sigma
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::invalid(format!(
                "timestep {t} outside [1, {}]",
                self.steps
            )));
        }
        Ok(())
    }

    /// Coefficient `√(1 − α_{t−1} − σ_t²)` of the predicted noise in the
    /// DDIM mean.
    pub fn direction_coeff(&self, t: usize) -> Result<f64> {
        let rem = 1.0 - self.alpha[t - 1] - self.sigma[t] * self.sigma[t];
        if rem < -1e-15 {
            return Err(Error::invalid(format!(
                "schedule invalid at t = {t}: 1 - alpha_prev - sigma^2 = {rem}"
            )));
        }
        Ok(rem.max(0.0).sqrt())
    }
}
