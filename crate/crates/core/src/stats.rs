//! Small numeric helpers shared across modules.

use statrs::function::erf::erfc;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log Σ exp(v)`, `-∞` for an empty or all `-∞` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log weights in place so that their log-sum-exp is zero.
/// Returns the normalizer, or `None` if every weight is `-∞`.
pub fn normalize_log_weights(log_weights: &mut [f64]) -> Option<f64> {
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return None;
    }
    for w in log_weights.iter_mut() {
        *w -= lse;
    }
    Some(lse)
}

/// `log(1 - exp(x))` for `x ≤ 0`.
pub fn log1m_exp(x: f64) -> f64 {
    if x > 0.0 {
        f64::NAN
    } else if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(z)`, accurate for large `z`.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Scalar normal log density.
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Weighted mean and standard deviation of `values` under normalized `weights`.
pub fn weighted_mean_std(values: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let mean: f64 = values.clone().map(|(v, w)| v * w).sum();
    let var: f64 = values.map(|(v, w)| w * (v - mean) * (v - mean)).sum();
    (mean, var.max(0.0).sqrt())
}
