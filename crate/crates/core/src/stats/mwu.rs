use serde::{Deserialize, Serialize};

use super::{normal_two_sided, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// U for the first sample: pairs with a > b plus half the ties.
    pub u_statistic: f64,
    /// U for the second sample; `u_statistic + u_other = n_a * n_b`.
    pub u_other: f64,
    /// Midrank sum of the first sample in the pooled ranking.
    pub rank_sum_a: f64,
    pub z: f64,
    pub p_two_sided: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Mann-Whitney U with midranks, tie-corrected variance and a 0.5
/// continuity correction in the normal approximation.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MwuResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Validation("both samples need at least one value".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(StatsError::Validation("samples contain NaN".into()));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let n = n_a + n_b;

    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        // ranks i+1..=j share their average
        let midrank = (i + 1 + j) as f64 / 2.0;
        rank_sum_a += midrank * pooled[i..j].iter().filter(|(_, in_a)| *in_a).count() as f64;
        tie_term += t * t * t - t;
        i = j;
    }

    let (fa, fb, fn_) = (n_a as f64, n_b as f64, n as f64);
    let u_a = rank_sum_a - fa * (fa + 1.0) / 2.0;
    let u_b = fa * fb - u_a;
    let mu = fa * fb / 2.0;
    let tie_adjust = if n > 1 { tie_term / (fn_ * (fn_ - 1.0)) } else { 0.0 };
    let var = fa * fb / 12.0 * ((fn_ + 1.0) - tie_adjust);

    let (z, p) = if var > 0.0 {
        let diff = u_a - mu;
        let corrected = (diff.abs() - 0.5).max(0.0);
        let z = corrected.copysign(diff) / var.sqrt();
        (z, normal_two_sided(z))
    } else {
        (0.0, 1.0)
    };

    Ok(MwuResult {
        u_statistic: u_a,
        u_other: u_b,
        rank_sum_a,
        z,
        p_two_sided: p,
        n_a,
        n_b,
    })
}
