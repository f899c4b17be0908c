use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{DdlError, Result};

/// Inverse standard-normal CDF, accurate to about 1e-15 in the central range.
///
/// Starts from `-√2·erfc⁻¹(2p)` and applies one Newton step against `erfc`,
/// always in the lower tail (upper-tail inputs are mirrored; `1 - p` is exact
/// there) so the residual is not swamped by cancellation.
pub fn normal_quantile(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(DdlError::OutOfRange(prob));
    }
    if prob == 0.5 {
        return Ok(0.0);
    }
    if prob > 0.5 {
        return Ok(-lower_quantile(1.0 - prob));
    }
    Ok(lower_quantile(prob))
}

fn lower_quantile(prob: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * prob);
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        x - (normal_cdf(x) - prob) / density
    } else {
        x
    }
}

/// Standard-normal CDF through the same erfc kernel (musl-derived, ~1 ulp).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided p-value `2(1 - Φ(|z|))`, evaluated as `erfc(|z|/√2)` to keep tail precision.
pub fn two_sided_p_value(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2)
}
