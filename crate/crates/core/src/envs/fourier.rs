//! Multivariate Fourier-basis features.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// One feature cos(π c·x) per coefficient vector c ∈ {0, …, n}^d, enumerated
/// in lexicographic order of c. Inputs are clamped to [0, 1]; the first
/// feature (c = 0) is always 1.
pub fn fourier_features(x: &[f64], order: usize, max_features: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("fourier_features"));
    }
    let d = x.len();
    let n_features = (order + 1).checked_pow(d as u32).filter(|&n| n <= max_features);
    let n_features = n_features.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "(order+1)^d = {}^{d} exceeds the feature budget {max_features}",
            order + 1
        ))
    })?;
    let clamped: Vec<f64> = x.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    let mut features = Vec::with_capacity(n_features);
    let mut coeff = vec![0usize; d];
    loop {
        let dot: f64 = coeff
            .iter()
            .zip(&clamped)
            .map(|(&c, &xi)| c as f64 * xi)
            .sum();
        features.push((PI * dot).cos());
        // lexicographic increment, last index fastest
        let mut i = d;
        loop {
            if i == 0 {
                return Ok(features);
            }
            i -= 1;
            if coeff[i] < order {
                coeff[i] += 1;
                coeff[i + 1..].iter_mut().for_each(|c| *c = 0);
                break;
            }
        }
    }
}
