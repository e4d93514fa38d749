//! Evaluation statistics: rank tests, effect sizes, scale reliability,
//! least-squares regression and a synthetic cohort generator.

mod effect;
mod mwu;
pub mod ols;
mod reliability;
pub mod simulate;

pub use effect::{cohens_d, EffectMagnitude, EffectSize};
pub use mwu::{mann_whitney_u, MwuResult};
pub use reliability::{cronbach_alpha, item_total_correlations, ItemTotal};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatsError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("design matrix is rank deficient: {}", describe_collinear(.0))]
    RankDeficient(Vec<Collinearity>),
}

/// A design column that is (numerically) a combination of earlier columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Collinearity {
    pub column: String,
    pub spanned_by: Vec<String>,
}

fn describe_collinear(items: &[Collinearity]) -> String {
    items
        .iter()
        .map(|c| {
            if c.spanned_by.is_empty() {
                format!("{} is identically zero", c.column)
            } else {
                format!("{} ~ {}", c.column, c.spanned_by.join(" + "))
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n - 1 denominator.
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Two-sided p-value of a standard normal statistic.
pub(crate) fn normal_two_sided(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided p-value of a Student t statistic.
pub(crate) fn student_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    statrs::function::beta::beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Significance stars at the 0.05 / 0.01 / 0.001 levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}
