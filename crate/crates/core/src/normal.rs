//! Standard normal distribution helpers with care for the far tails.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// ln(sqrt(2*pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
#[inline]
pub fn cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - cdf(x)`, accurate for large positive `x`.
#[inline]
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Natural log of the standard normal CDF, finite for every finite `x`.
pub fn log_cdf(x: f64) -> f64 {
    if x > 5.0 {
        // cdf(x) = 1 - tiny; ln_1p keeps the tiny part.
        return (-sf(x)).ln_1p();
    }
    if x > -30.0 {
        return cdf(x).ln();
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // Asymptotic expansion of the Mills ratio.
    let z = -x;
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) + 105.0 / (z2 * z2 * z2 * z2);
    -0.5 * z2 - z.ln() - LN_SQRT_2PI + series.ln()
}

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Natural log of the standard normal density.
#[inline]
pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Inverse of the standard normal CDF. Returns +/-inf at the endpoints.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse of the upper tail: returns `x` with `sf(x) = q`.
pub fn quantile_upper(q: f64) -> f64 {
    -quantile(q)
}

/// Probability mass of the interval `(lo, hi)` under the standard normal,
/// computed on whichever side of zero avoids cancellation.
pub fn interval_mass(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo > 0.0 {
        (sf(lo) - sf(hi)).max(0.0)
    } else {
        (cdf(hi) - cdf(lo)).max(0.0)
    }
}

/// Log of [`interval_mass`], finite even when the interval sits deep in a tail.
pub fn log_interval_mass(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return f64::NEG_INFINITY;
    }
    // Reflect so the interval is not entirely in the upper tail.
    let (lo, hi) = if lo > 0.0 { (-hi, -lo) } else { (lo, hi) };
    let log_hi = log_cdf(hi);
    if lo == f64::NEG_INFINITY {
        return log_hi;
    }
    let log_lo = log_cdf(lo);
    // log(e^a - e^b) = a + log(1 - e^(b - a))
    log_hi + (-(log_lo - log_hi).exp()).ln_1p()
}

/// Draw from the standard normal truncated to `(lo, hi)` by inversion at `u`,
/// returning the interval mass alongside the draw.
pub fn truncated_inverse(lo: f64, hi: f64, u: f64) -> (f64, f64) {
    let mass = interval_mass(lo, hi);
    if mass <= 0.0 {
        return (0.0, if lo.is_finite() { lo } else { hi });
    }
    let x = if lo > 0.0 {
        // Work with upper tails to keep precision.
        let q = sf(lo) - u * mass;
        quantile_upper(q.clamp(f64::MIN_POSITIVE, 1.0))
    } else {
        let p = cdf(lo) + u * mass;
        quantile(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    };
    (mass, x.clamp(lo, hi))
}
