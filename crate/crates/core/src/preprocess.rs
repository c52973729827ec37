//! Shared standardization followed by a sigmoid squash.
//!
//! Every gate of an ensemble must see inputs standardized with the same
//! statistics; otherwise their reconstruction errors are not comparable.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::nn::Activation;
use crate::{Error, Matrix, Result};

/// Floor applied to every standard deviation.
pub const EPSILON_STD: f32 = 1e-6;

/// Per-dimension mean and population standard deviation of a reference corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    mean: Vec<f32>,
    std: Vec<f32>,
    source_id: String,
}

impl ReferenceStats {
    /// Builds stats from explicit vectors; standard deviations are floored.
    pub fn new(mean: Vec<f32>, std: Vec<f32>, source_id: impl Into<String>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Dimension(format!(
                "mean has {} entries, std has {}",
                mean.len(),
                std.len()
            )));
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("reference statistics must be finite".into()));
        }
        let std = std.into_iter().map(|s| s.max(EPSILON_STD)).collect();
        Ok(Self {
            mean,
            std,
            source_id: source_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn std(&self) -> &[f32] {
        &self.std
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

/// Per-dimension mean and population standard deviation of `corpus`.
pub fn compute_reference_stats(
    corpus: &Matrix<f32>,
    source_id: impl Into<String>,
) -> Result<ReferenceStats> {
    let n = corpus.rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let d = corpus.cols();
    let mut mean = alloc::vec![0.0f64; d];
    for row in corpus.row_iter() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = alloc::vec![0.0f64; d];
    for row in corpus.row_iter() {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            let c = v as f64 - m;
            *s += c * c;
        }
    }
    let std = var
        .into_iter()
        .map(|s| libm::sqrt(s / n as f64) as f32)
        .collect();
    ReferenceStats::new(mean.into_iter().map(|m| m as f32).collect(), std, source_id)
}

/// `sigmoid((x − mean) / std)` elementwise; every output lies in `(0, 1)`.
pub fn preprocess(x: &Matrix<f32>, stats: &ReferenceStats) -> Result<Matrix<f32>> {
    if x.cols() != stats.dim() {
        return Err(Error::Dimension(format!(
            "sample has {} features, reference statistics have {}",
            x.cols(),
            stats.dim()
        )));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        for ((v, &m), &s) in out.row_mut(r).iter_mut().zip(&stats.mean).zip(&stats.std) {
            // f32 sigmoid rounds to exactly 0 or 1 past |z| ≈ 17 and 88
            let z = ((*v - m) / s).clamp(-15.0, 15.0);
            *v = Activation::Sigmoid.apply(z);
        }
    }
    Ok(out)
}
