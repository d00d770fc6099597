//! Extreme eigenvalues of `J_gᵀ J_g` for the input Jacobian of the client
//! gradient.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::autodiff::matmul_raw;
use crate::error::{Error, Result};
use crate::models::{AttackedModel, Label};
use crate::tensor::Tensor;

/// Largest dense Jacobian (entries) we agree to build.
pub const MAX_JACOBIAN_ENTRIES: usize = 1_000_000;

/// `JᵀJ` for a `[P, n]` matrix.
pub fn gram(jac: &Tensor) -> Result<Tensor> {
    if jac.rank() != 2 {
        return Err(Error::InvalidShape {
            what: "jacobian",
            shape: jac.shape().to_vec(),
        });
    }
    let (p, n) = (jac.shape()[0], jac.shape()[1]);
    let mut jt = vec![0.0; n * p];
    for r in 0..p {
        for c in 0..n {
            jt[c * p + r] = jac.data()[r * n + c];
        }
    }
    Tensor::matrix(n, n, matmul_raw(&jt, jac.data(), n, p, n))
}

/// `(λ_min, λ_max)` of a symmetric matrix by a dense eigensolve.
pub fn symmetric_extremes(sym: &Tensor) -> Result<(f64, f64)> {
    let n = sym.shape()[0];
    if sym.shape() != [n, n] {
        return Err(Error::invalid("expected a square matrix"));
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, sym.data()));
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

fn rayleigh_power(mat: &[f64], n: usize, iters: usize) -> f64 {
    // deterministic start with every coordinate excited
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7548776662).fract()).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = matmul_raw(mat, &v, n, n, 1);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let aw = matmul_raw(mat, &next, n, n, 1);
        let new_lambda: f64 = next.iter().zip(&aw).map(|(a, b)| a * b).sum();
        let done = (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs().max(1e-300);
        lambda = new_lambda;
        v = next;
        if done {
            break;
        }
    }
    lambda
}

/// `(λ_min, λ_max)` of a positive semidefinite matrix by power iteration on
/// the matrix and on its shift `λ_max I − A`.
pub fn power_extremes(sym: &Tensor, iters: usize) -> Result<(f64, f64)> {
    let n = sym.shape()[0];
    if sym.shape() != [n, n] {
        return Err(Error::invalid("expected a square matrix"));
    }
    let hi = rayleigh_power(sym.data(), n, iters);
    let mut shifted: Vec<f64> = sym.data().iter().map(|v| -v).collect();
    for i in 0..n {
        shifted[i * n + i] += hi;
    }
    let lo = hi - rayleigh_power(&shifted, n, iters);
    Ok((lo, hi))
}

/// Extreme eigenvalues of `J_g(x)ᵀ J_g(x)` where `J_g = ∂g/∂x`.
pub fn jacobian_spectrum(model: &AttackedModel, x: &Tensor, label: &Label) -> Result<(f64, f64)> {
    let entries = model.param_count() * x.len();
    if entries > MAX_JACOBIAN_ENTRIES {
        return Err(Error::invalid(format!(
            "dense jacobian would have {entries} entries (limit {MAX_JACOBIAN_ENTRIES})"
        )));
    }
    let jac = model.input_jacobian(x, label)?;
    symmetric_extremes(&gram(&jac)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_rows_make_a_zero_eigenvalue() {
        // J with columns (1,1) and (2,2): JᵀJ = [[2,4],[4,8]], eigenvalues 0 and 10.
        let j = Tensor::matrix(2, 2, vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        let (lo, hi) = symmetric_extremes(&gram(&j).unwrap()).unwrap();
        assert!(lo.abs() < 1e-10);
        assert!((hi - 10.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_agrees_with_eigensolve() {
        let a = Tensor::matrix(3, 3, vec![4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]).unwrap();
        let (lo, hi) = symmetric_extremes(&a).unwrap();
        let (plo, phi) = power_extremes(&a, 100_000).unwrap();
        assert!((lo - plo).abs() <= 1e-6 * lo.abs());
        assert!((hi - phi).abs() <= 1e-6 * hi.abs());
        assert!(hi >= lo);
    }
}
