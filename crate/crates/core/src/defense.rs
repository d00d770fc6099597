//! Gradient perturbation applied by the client before sharing.

use crate::error::{Error, Result};
use crate::models::{LeakedGradient, Perturbation};
use crate::rng::SeededRng;

/// Reported noise grid for both perturbation kinds.
pub const VARIANCE_GRID: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

fn check_variance(variance: f64) -> Result<()> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::invalid(format!(
            "noise variance must be finite and non-negative, got {variance}"
        )));
    }
    Ok(())
}

fn perturbed(
    g: &LeakedGradient,
    kind: Perturbation,
    variance: f64,
    mut noise: impl FnMut() -> f64,
) -> LeakedGradient {
    let mut out = g.clone();
    out.values.data_mut().iter_mut().for_each(|v| *v += noise());
    out.meta.perturbation = kind;
    out.meta.variance = variance;
    out
}

/// Adds i.i.d. `N(0, variance)` to every entry.
pub fn perturb_gaussian(g: &LeakedGradient, variance: f64, rng: &mut SeededRng) -> Result<LeakedGradient> {
    check_variance(variance)?;
    let std = variance.sqrt();
    Ok(perturbed(g, Perturbation::Gaussian, variance, || {
        std * rng.normal()
    }))
}

/// Laplace scale with the given variance: `b = √(variance / 2)`.
pub fn laplace_scale(variance: f64) -> f64 {
    (variance / 2.0).sqrt()
}

/// Adds i.i.d. `Laplace(0, b)` with `2b² = variance` to every entry.
pub fn perturb_laplacian(g: &LeakedGradient, variance: f64, rng: &mut SeededRng) -> Result<LeakedGradient> {
    check_variance(variance)?;
    let b = laplace_scale(variance);
    Ok(perturbed(g, Perturbation::Laplacian, variance, || {
        if b == 0.0 {
            0.0
        } else {
            rng.laplace(b)
        }
    }))
}

pub fn perturb(
    g: &LeakedGradient,
    kind: Perturbation,
    variance: f64,
    rng: &mut SeededRng,
) -> Result<LeakedGradient> {
    match kind {
        Perturbation::None => Ok(g.clone()),
        Perturbation::Gaussian => perturb_gaussian(g, variance, rng),
        Perturbation::Laplacian => perturb_laplacian(g, variance, rng),
    }
}
