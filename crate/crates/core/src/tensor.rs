//! Dense row-major `f64` tensors and their text serialization.
//!
//! The text format is a header line `tensor <rank> <d1> ... <dk>` followed
//! by whitespace-separated values in row-major order, each written with 17
//! significant digits so that a write/read cycle is lossless.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape {
                what: "tensor",
                shape,
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "tensor of shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// A rank-1 tensor owning `data`.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Serializes into the text tensor format.
    pub fn to_text(&self) -> String {
        let mut out = format!("tensor {}", self.shape.len());
        for d in &self.shape {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        let row = *self.shape.last().unwrap_or(&1);
        for (i, v) in self.data.iter().enumerate() {
            let _ = write!(out, "{v:.16e}");
            out.push(if (i + 1) % row == 0 { '\n' } else { ' ' });
        }
        out
    }

    /// Parses the text tensor format. Extra trailing whitespace is ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().skip_while(|(_, l)| l.trim().is_empty());
        let (header_line, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing tensor header".into(),
        })?;
        let line = header_line + 1;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("tensor") {
            return Err(Error::Parse {
                line,
                msg: format!("expected `tensor <rank> ...`, got `{header}`"),
            });
        }
        let parse_usize = |s: Option<&str>| -> Result<usize> {
            s.and_then(|s| s.parse().ok()).ok_or(Error::Parse {
                line,
                msg: "malformed tensor header".into(),
            })
        };
        let rank = parse_usize(fields.next())?;
        let shape = (0..rank)
            .map(|_| parse_usize(fields.next()))
            .collect::<Result<Vec<_>>>()?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line,
                msg: "trailing fields in tensor header".into(),
            });
        }
        let mut data = Vec::with_capacity(shape.iter().product());
        for (idx, l) in lines {
            for tok in l.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad number `{tok}`"),
                })?;
                data.push(v);
            }
        }
        Self::new(shape, data).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn text_header_layout() {
        let t = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let text = t.to_text();
        assert!(text.starts_with("tensor 2 2 2\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn text_rejects_garbage() {
        assert!(Tensor::from_text("matrix 1 2\n1 2").is_err());
        assert!(Tensor::from_text("tensor 1 3\n1 2").is_err());
        assert!(Tensor::from_text("tensor 1 2\n1 x").is_err());
    }

    proptest! {
        #[test]
        fn text_roundtrip_is_lossless(data in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let t = Tensor::vector(data);
            let back = Tensor::from_text(&t.to_text()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
