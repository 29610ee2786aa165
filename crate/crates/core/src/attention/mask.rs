use std::f64::consts::PI;

use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Toeplitz locality mask `(1/2π) exp(-(j-i)^2 / σ²)`.
///
/// `variance = f64::INFINITY` gives the global mask with every entry `1/2π`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMask {
    size: usize,
    variance: f64,
    matrix: Tensor,
}

impl GaussianMask {
    pub fn new(size: usize, variance: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::arg("mask size must be at least 1"));
        }
        if variance.is_nan() || variance <= 0.0 {
            return Err(Error::arg(format!("mask variance must be positive, got {variance}")));
        }
        let mut matrix = Tensor::zeros(size, size);
        for i in 0..size {
            for j in 0..size {
                matrix.set(i, j, gaussian_entry(i, j, variance));
            }
        }
        Ok(Self {
            size,
            variance,
            matrix,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }
}

/// Shorthand for [`GaussianMask::new`].
pub fn gaussian_mask(size: usize, variance: f64) -> Result<GaussianMask> {
    GaussianMask::new(size, variance)
}

fn gaussian_entry(i: usize, j: usize, variance: f64) -> f64 {
    let d = j as f64 - i as f64;
    // d*d / inf is 0, so the global mask needs no special case.
    (-(d * d) / variance).exp() / (2.0 * PI)
}

/// `{2^1, ..., 2^(count-1), inf}`: the variance ladder of `count` parallel blocks.
pub fn variance_schedule(count: usize) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    let mut out: Vec<f64> = (1..count).map(|k| 2f64.powi(k as i32)).collect();
    out.push(f64::INFINITY);
    out
}
