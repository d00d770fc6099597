//! Statistical and trend checks on sampled data and attack traces.

use crate::attack::AttackTrace;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

use super::report::TheoremReport;

/// Required fraction of non-increasing steps in the convex regime.
pub const MONOTONE_FRACTION: f64 = 0.95;

/// Thresholds and bound of the Gaussian norm concentration inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTail {
    /// `nσ² + 2nσ²(√ε + ε)`
    pub upper_threshold: f64,
    /// `nσ² + 2nσ²√ε`, the threshold of the lower-tail event in the form usually quoted.
    pub quoted_lower_threshold: f64,
    /// `e^{−nε}`
    pub bound: f64,
}

pub fn chi_square_tail(n: usize, sigma: f64, eps: f64) -> ChiSquareTail {
    let base = n as f64 * sigma * sigma;
    ChiSquareTail {
        upper_threshold: base + 2.0 * base * (eps.sqrt() + eps),
        quoted_lower_threshold: base + 2.0 * base * eps.sqrt(),
        bound: (-(n as f64) * eps).exp(),
    }
}

/// Draws `samples` vectors from `N(0, σ²I_n)` and compares the frequency of
/// `‖x‖² ≥ upper_threshold` with `e^{−nε}` plus three binomial standard
/// errors. The quoted lower-tail event is measured and reported only.
pub fn laurent_massart_check(
    n: usize,
    sigma: f64,
    eps: f64,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<TheoremReport> {
    if n == 0 || !(eps > 0.0) || !(sigma > 0.0) {
        return Err(Error::invalid("need n ≥ 1, σ > 0 and ε > 0"));
    }
    if samples < 10_000 {
        return Err(Error::invalid("need at least 10⁴ samples"));
    }
    let tail = chi_square_tail(n, sigma, eps);
    let (mut upper, mut lower) = (0usize, 0usize);
    for _ in 0..samples {
        let sq: f64 = (0..n).map(|_| (sigma * rng.normal()).powi(2)).sum();
        if sq >= tail.upper_threshold {
            upper += 1;
        }
        if sq <= tail.quoted_lower_threshold {
            lower += 1;
        }
    }
    let s = samples as f64;
    let upper_freq = upper as f64 / s;
    let lower_freq = lower as f64 / s;
    let p = tail.bound.clamp(0.0, 1.0);
    let se = (p * (1.0 - p) / s).sqrt();
    let mut r = TheoremReport::new("chi-square-tail", 3.0 * se, samples);
    r.push("n", n as f64);
    r.push("sigma", sigma);
    r.push("eps", eps);
    r.push("upper_threshold", tail.upper_threshold);
    r.push("upper_frequency", upper_freq);
    r.push("bound", tail.bound);
    r.push("binomial_se", se);
    r.push("quoted_lower_threshold", tail.quoted_lower_threshold);
    r.push("quoted_lower_frequency", lower_freq);
    r.pass = upper_freq <= tail.bound + 3.0 * se;
    if lower_freq > tail.bound + 3.0 * se {
        r.notes.push(format!(
            "quoted lower-tail event has frequency {lower_freq:.4} > bound {:.3e}; not asserted",
            tail.bound
        ));
    }
    Ok(r)
}

/// Fraction of consecutive steps whose loss does not increase by more than
/// `tol`.
pub fn monotone_fraction(losses: &[f64], tol: f64) -> f64 {
    if losses.len() < 2 {
        return 1.0;
    }
    let ok = losses.windows(2).filter(|w| w[1] <= w[0] + tol).count();
    ok as f64 / (losses.len() - 1) as f64
}

pub fn check_monotonicity(trace: &AttackTrace, tol: f64) -> Result<TheoremReport> {
    if trace.records.is_empty() {
        return Err(Error::invalid("empty trace"));
    }
    let frac = monotone_fraction(&trace.losses(), tol);
    let mut r = TheoremReport::new("convex-monotonicity", tol, trace.records.len());
    r.push("monotone_fraction", frac);
    r.push("required_fraction", MONOTONE_FRACTION);
    r.pass = frac >= MONOTONE_FRACTION;
    Ok(r)
}

/// `(ℒ_first − ℒ_last) / (steps − 1)`, the mean per-step decrease.
pub fn mean_decrease(trace: &AttackTrace) -> f64 {
    let l = trace.losses();
    if l.len() < 2 {
        return 0.0;
    }
    (l[0] - l[l.len() - 1]) / (l.len() - 1) as f64
}

/// Mean per-step loss decrease for each noise level, seed-averaged; passes
/// when the decrease does not grow with the noise variance.
pub fn convergence_rate_report(levels: &[(f64, Vec<AttackTrace>)]) -> Result<TheoremReport> {
    if levels.len() < 2 {
        return Err(Error::invalid("need at least two noise levels"));
    }
    if levels.iter().any(|(_, t)| t.len() < 3) {
        return Err(Error::invalid("need at least three seeds per noise level"));
    }
    let mut sorted: Vec<&(f64, Vec<AttackTrace>)> = levels.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rates: Vec<f64> = sorted
        .iter()
        .map(|(_, traces)| traces.iter().map(mean_decrease).sum::<f64>() / traces.len() as f64)
        .collect();
    let samples = sorted.iter().map(|(_, t)| t.len()).sum();
    let mut r = TheoremReport::new("noise-convergence-rate", 0.0, samples);
    for ((v, _), rate) in sorted.iter().zip(&rates) {
        r.push(format!("mean_decrease@{v:e}"), *rate);
    }
    r.pass = rates.windows(2).all(|w| w[1] <= w[0]);
    Ok(r)
}

/// Passes when `values` strictly decrease in the order given.
pub fn check_strict_decrease(id: &str, labels: &[f64], values: &[f64], samples: usize) -> TheoremReport {
    let mut r = TheoremReport::new(id, 0.0, samples);
    for (l, v) in labels.iter().zip(values) {
        r.push(format!("value@{l:e}"), *v);
    }
    r.pass = values.len() >= 2 && values.windows(2).all(|w| w[1] < w[0]);
    r
}

/// Ranks starting at 1; ties share their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of the ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("spearman needs two equal-length series of length ≥ 2"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::invalid("spearman is undefined for a constant series"));
    }
    Ok(cov / (va * vb).sqrt())
}
