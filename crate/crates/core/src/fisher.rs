//! Fisher's method for combining independent p-values.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherResult {
    /// `-2 sum ln p_j`.
    pub statistic: f64,
    /// Degrees of freedom `2k` of the reference chi-square law.
    pub df: usize,
    pub p_value: f64,
}

/// Upper tail of the chi-square law with an even number `df` of degrees of
/// freedom: `exp(-x/2) sum_{i < df/2} (x/2)^i / i!`.
pub fn chi_square_sf_even(x: f64, df: usize) -> f64 {
    assert!(df >= 2 && df % 2 == 0, "degrees of freedom must be even");
    if x <= 0.0 {
        return 1.0;
    }
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..df / 2 {
        term *= half / i as f64;
        sum += term;
    }
    // Work in logs so that large statistics do not produce inf * 0.
    (sum.ln() - half).exp().min(1.0)
}

/// Combines p-values in `(0, 1]`.
pub fn fisher_combine(pvalues: &[f64]) -> Result<FisherResult> {
    if pvalues.is_empty() {
        return Err(Error::EmptyPValues);
    }
    if let Some(&p) = pvalues.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidProbability(p));
    }
    let statistic = -2.0 * pvalues.iter().map(|p| p.ln()).sum::<f64>();
    let df = 2 * pvalues.len();
    Ok(FisherResult {
        statistic,
        df,
        p_value: chi_square_sf_even(statistic, df),
    })
}

/// Replaces zero p-values by the smallest attainable corrected value
/// `1 / (draws + 1)`, warning when it does so.
pub fn clamp_pvalues(pvalues: &[f64], draws: usize) -> Vec<f64> {
    let floor = 1.0 / (draws as f64 + 1.0);
    let clamped = pvalues.iter().filter(|&&p| p <= 0.0).count();
    if clamped > 0 {
        log::warn!("{clamped} p-value(s) of zero replaced by 1/(K+1) = {floor}");
    }
    pvalues
        .iter()
        .map(|&p| if p <= 0.0 { floor } else { p })
        .collect()
}
