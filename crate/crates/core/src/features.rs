//! Exponentially weighted moving moments and the two-column feature matrix
//! (EW mean, EW volatility) that the HMM is trained on.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::ObservationMatrix;
use crate::matrix::RowMatrix;

/// Floor applied to the EW variance before taking its square root.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Minimum standard deviation for a feature column to be normalizable.
pub const MIN_FEATURE_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub span: usize,
}

impl FeatureConfig {
    pub fn new(span: usize) -> Result<Self> {
        if span == 0 {
            return Err(Error::invalid("span must be at least 1"));
        }
        Ok(Self { span })
    }

    /// Smoothing weight `λ = 2 / (s + 1)`.
    pub fn lambda(&self) -> f64 {
        smoothing_weight(self.span)
    }
}

fn smoothing_weight(span: usize) -> f64 {
    2.0 / (span as f64 + 1.0)
}

/// `out[t] = λ·x[t] + (1 − λ)·out[t − 1]` with `out[−1] = init`.
pub fn ewmm(series: &[f64], span: usize, init: f64) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::invalid("ewmm of an empty series"));
    }
    if span == 0 {
        return Err(Error::invalid("span must be at least 1"));
    }
    if series.iter().any(|v| !v.is_finite()) || !init.is_finite() {
        return Err(Error::invalid("ewmm input must be finite"));
    }
    let lambda = smoothing_weight(span);
    let mut prev = init;
    Ok(series
        .iter()
        .map(|&x| {
            // Same recursion written so a constant input is an exact fixed point.
            prev = x - (1.0 - lambda) * (x - prev);
            prev
        })
        .collect())
}

/// Raw (un-normalized) features: column 0 is the EW mean of the returns,
/// column 1 the square root of the EW mean of squared deviations from it.
pub fn extract_features(returns: &[f64], config: FeatureConfig) -> Result<Vec<[f64; 2]>> {
    if returns.len() <= config.span {
        return Err(Error::InsufficientData {
            needed: config.span,
            got: returns.len(),
        });
    }
    let mean = ewmm(returns, config.span, returns[0])?;
    let sq_dev: Vec<f64> = returns
        .iter()
        .zip(&mean)
        .map(|(x, m)| (x - m) * (x - m))
        .collect();
    let var = ewmm(&sq_dev, config.span, sq_dev[0])?;
    Ok(mean
        .into_iter()
        .zip(var)
        .map(|(m, v)| [m, v.max(VARIANCE_FLOOR).sqrt()])
        .collect())
}

/// Column means and population standard deviations of the training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub means: [f64; 2],
    pub stds: [f64; 2],
    pub fitted_range: Range<usize>,
}

impl NormalizationStats {
    pub fn identity(len: usize) -> Self {
        Self {
            means: [0.0, 0.0],
            stds: [1.0, 1.0],
            fitted_range: 0..len,
        }
    }

    #[inline]
    pub fn apply(&self, raw: [f64; 2]) -> [f64; 2] {
        [
            (raw[0] - self.means[0]) / self.stds[0],
            (raw[1] - self.means[1]) / self.stds[1],
        ]
    }

    #[inline]
    pub fn invert(&self, normalized: [f64; 2]) -> [f64; 2] {
        [
            normalized[0] * self.stds[0] + self.means[0],
            normalized[1] * self.stds[1] + self.means[1],
        ]
    }
}

pub fn zscore_fit(raw: &[[f64; 2]], train_range: Range<usize>) -> Result<NormalizationStats> {
    if train_range.is_empty() || train_range.end > raw.len() {
        return Err(Error::invalid(format!(
            "normalization range {train_range:?} is empty or exceeds {} rows",
            raw.len()
        )));
    }
    let window = &raw[train_range.clone()];
    let n = window.len() as f64;
    let mut means = [0.0; 2];
    let mut stds = [0.0; 2];
    for k in 0..2 {
        means[k] = window.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = window.iter().map(|r| (r[k] - means[k]).powi(2)).sum::<f64>() / n;
        stds[k] = var.sqrt();
        if !(stds[k] > MIN_FEATURE_STD) {
            return Err(Error::DegenerateFeature { column: k });
        }
    }
    Ok(NormalizationStats {
        means,
        stds,
        fitted_range: train_range,
    })
}

pub fn zscore_apply(raw: &[[f64; 2]], norm: &NormalizationStats) -> Vec<[f64; 2]> {
    raw.iter().map(|&r| norm.apply(r)).collect()
}

/// Normalized and raw features for one instrument at one span.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<[f64; 2]>,
    pub raw_values: Vec<[f64; 2]>,
    pub norm: NormalizationStats,
    pub config: FeatureConfig,
}

impl FeatureMatrix {
    /// Extracts features and z-scores them with statistics fitted on
    /// `train_range` minus the first `span` warm-up rows.
    pub fn build(returns: &[f64], config: FeatureConfig, train_range: Range<usize>) -> Result<Self> {
        let raw_values = extract_features(returns, config)?;
        let fit_range = train_range.start.max(config.span)..train_range.end;
        let norm = zscore_fit(&raw_values, fit_range)?;
        Ok(Self::with_norm(raw_values, norm, config))
    }

    /// Applies existing statistics, e.g. those stored with a trained model.
    pub fn with_norm(raw_values: Vec<[f64; 2]>, norm: NormalizationStats, config: FeatureConfig) -> Self {
        Self {
            values: zscore_apply(&raw_values, &norm),
            raw_values,
            norm,
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows before this index are initialization-dominated.
    pub fn warmup(&self) -> usize {
        self.config.span
    }

    /// Normalized features over `range` as HMM observations.
    pub fn observations(&self, range: Range<usize>) -> Result<ObservationMatrix> {
        if range.is_empty() || range.end > self.len() {
            return Err(Error::invalid(format!(
                "feature range {range:?} is empty or exceeds {} rows",
                self.len()
            )));
        }
        let flat: Vec<f64> = self.values[range.clone()].iter().flatten().copied().collect();
        ObservationMatrix::new(RowMatrix::from_flat(range.len(), 2, flat)?)
    }

    /// Training observations: `train_range` with warm-up rows removed.
    pub fn training_observations(&self, train_range: Range<usize>) -> Result<ObservationMatrix> {
        self.observations(train_range.start.max(self.warmup())..train_range.end)
    }
}
