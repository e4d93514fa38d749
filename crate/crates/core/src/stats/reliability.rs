use serde::{Deserialize, Serialize};

use super::{sample_variance, StatsError};

fn check_matrix(rows: &[Vec<f64>]) -> Result<usize, StatsError> {
    if rows.len() < 2 {
        return Err(StatsError::Validation("need at least two respondents".into()));
    }
    let k = rows[0].len();
    if k < 2 {
        return Err(StatsError::Validation("need at least two items".into()));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(StatsError::Validation("ragged item matrix".into()));
    }
    Ok(k)
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// Cronbach's alpha over an n x k matrix (rows are respondents).
pub fn cronbach_alpha(rows: &[Vec<f64>]) -> Result<f64, StatsError> {
    let k = check_matrix(rows)?;
    let item_var: f64 = (0..k).map(|j| sample_variance(&column(rows, j))).sum();
    let totals: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let total_var = sample_variance(&totals);
    if !(total_var > 0.0) {
        return Err(StatsError::DegenerateVariance("total score has zero variance".into()));
    }
    let kf = k as f64;
    Ok(kf / (kf - 1.0) * (1.0 - item_var / total_var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemTotal {
    /// Pearson correlation of the item with the full total.
    pub uncorrected: f64,
    /// Pearson correlation of the item with the total of the other items.
    pub corrected: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Item-total correlations, with and without removing the item from the total.
/// Items with zero variance yield NaN.
pub fn item_total_correlations(rows: &[Vec<f64>]) -> Result<Vec<ItemTotal>, StatsError> {
    let k = check_matrix(rows)?;
    let totals: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    Ok((0..k)
        .map(|j| {
            let item = column(rows, j);
            let rest: Vec<f64> = totals.iter().zip(&item).map(|(t, v)| t - v).collect();
            ItemTotal {
                uncorrected: pearson(&item, &totals),
                corrected: pearson(&item, &rest),
            }
        })
        .collect())
}
