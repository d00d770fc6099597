use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(total / a.len() as f64)
}

/// `10 log10(max² / mse)` in dB; `+∞` when the inputs are identical.
pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (max_value * max_value / mse).log10()
}

pub fn psnr(a: &Tensor, b: &Tensor, max_value: f64) -> Result<f64> {
    if !(max_value > 0.0) {
        return Err(Error::invalid("psnr max_value must be positive"));
    }
    Ok(psnr_from_mse(mse(a, b)?, max_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn identical_inputs() {
        let a = Tensor::vector(vec![0.1, 0.2]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_offset() {
        let a = Tensor::vector(vec![0.3, 0.5, 0.9]);
        let b = a.map(|v| v + 0.1);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = SeededRng::new(11);
        let a = rng.normal_tensor(&[8, 8]);
        let b = rng.normal_tensor(&[8, 8]);
        let mut acc = 0.0;
        for i in 0..64 {
            let d = a.data()[i] - b.data()[i];
            acc += d * d;
        }
        assert!((mse(&a, &b).unwrap() - acc / 64.0).abs() < 1e-15);
    }

    #[test]
    fn reported_table_pairing() {
        // MSE 0.0016 pairs with ~28 dB (reported 28.03 after rounding the MSE).
        let p = psnr_from_mse(0.0016, 1.0);
        assert!((p - 27.9588).abs() < 1e-3);
        assert!((p - 28.03).abs() < 0.1);
    }

    #[test]
    fn errors() {
        let a = Tensor::vector(vec![1.0]);
        let b = Tensor::vector(vec![1.0, 2.0]);
        assert!(mse(&a, &b).is_err());
        assert!(psnr(&a, &a, 0.0).is_err());
    }
}
