use serde::{Deserialize, Serialize};

use super::{mean, sample_variance, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectMagnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectMagnitude {
    /// Conventional 0.2 / 0.5 / 0.8 cut points on |d|.
    pub fn of(d: f64) -> EffectMagnitude {
        match d.abs() {
            x if x < 0.2 => EffectMagnitude::Negligible,
            x if x < 0.5 => EffectMagnitude::Small,
            x if x < 0.8 => EffectMagnitude::Medium,
            _ => EffectMagnitude::Large,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub cohens_d: f64,
    pub magnitude: EffectMagnitude,
}

/// Standardized mean difference `(mean(a) - mean(b)) / pooled_sd`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<EffectSize, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::Validation("Cohen's d needs at least two values per group".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0)).sqrt();
    if !(pooled > 0.0) {
        return Err(StatsError::DegenerateVariance("pooled standard deviation is zero".into()));
    }
    let d = (mean(a) - mean(b)) / pooled;
    Ok(EffectSize {
        cohens_d: d,
        magnitude: EffectMagnitude::of(d),
    })
}
