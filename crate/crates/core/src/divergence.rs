//! Phase-space RMS deviation between the classical reference and the
//! measured quantum coordinates, and first-crossing detection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::ClassicalState;
use crate::measurement::PhasePoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("RMS deviation of an empty ensemble")]
    EmptyEnsemble,
    #[error("time {t} does not follow the last recorded time {last}")]
    NonMonotonicTime { t: f64, last: f64 },
}

/// `D = sqrt(1/N sum_i [(x_c - x_i)^2 + (p_c - p_i)^2])`.
pub fn rms_deviation(classical: &ClassicalState, samples: &[PhasePoint]) -> Result<f64, DivergenceError> {
    if samples.is_empty() {
        return Err(DivergenceError::EmptyEnsemble);
    }
    let sum: f64 = samples
        .iter()
        .map(|s| (classical.x - s.x).powi(2) + (classical.p - s.p).powi(2))
        .sum();
    Ok((sum / samples.len() as f64).sqrt())
}

/// Ordered `(t, D)` samples with the first strict threshold crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSeries {
    pub samples: Vec<(f64, f64)>,
    pub threshold: f64,
    pub divergence_time: Option<f64>,
}

impl DivergenceSeries {
    pub fn new(threshold: f64) -> Self {
        DivergenceSeries {
            samples: Vec::new(),
            threshold,
            divergence_time: None,
        }
    }

    pub fn record(&mut self, t: f64, d: f64) -> Result<(), DivergenceError> {
        if let Some(&(last, _)) = self.samples.last() {
            if !(t > last) {
                return Err(DivergenceError::NonMonotonicTime { t, last });
            }
        }
        self.samples.push((t, d));
        if self.divergence_time.is_none() && d > self.threshold {
            self.divergence_time = Some(t);
        }
        Ok(())
    }

    pub fn has_diverged(&self) -> bool {
        self.divergence_time.is_some()
    }

    pub fn max_deviation(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
