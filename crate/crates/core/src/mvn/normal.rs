//! Univariate standard normal helpers.

use libm::erfc;
use rand::Rng;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// `1 / sqrt(2π)`
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// `ln(2π)`
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Beyond this many standard deviations the truncated sampler switches from
/// inverse-CDF to exponential rejection.
const FAR_TAIL: f64 = 4.0;
const QUANTILE_CLAMP: f64 = 38.0;

/// Standard normal CDF Φ(x), accurate in both tails.
#[inline]
pub fn std_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

#[inline]
pub fn std_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * x * x).exp()
    }
}

/// ln Φ(x). Uses the Mills-ratio asymptote far in the lower tail where
/// Φ underflows.
pub fn ln_std_cdf(x: f64) -> f64 {
    if x > -30.0 {
        std_cdf(x).ln()
    } else {
        let inv2 = 1.0 / (x * x);
        // ln φ(x) - ln(-x) + ln(1 - 1/x² + 3/x⁴)
        -0.5 * x * x - 0.5 * LN_2PI - (-x).ln() + (1.0 - inv2 + 3.0 * inv2 * inv2).ln()
    }
}

/// Standard normal quantile Φ⁻¹(p).
#[inline]
pub fn std_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// Probability mass of `[a, b]` under N(0,1), computed on the side of the
/// distribution that avoids cancellation.
#[inline]
pub fn std_interval_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        std_cdf(-a) - std_cdf(-b)
    } else {
        std_cdf(b) - std_cdf(a)
    }
}

/// Maps `w ∈ [0,1]` to the quantile of N(0,1) truncated to `[a, b]`.
/// The result is clamped to a finite range.
#[inline]
pub fn truncated_quantile(a: f64, b: f64, w: f64) -> f64 {
    let x = if a > 0.0 {
        let pa = std_cdf(-a);
        let pb = std_cdf(-b);
        -std_quantile(pa - w * (pa - pb))
    } else {
        let pa = std_cdf(a);
        let pb = std_cdf(b);
        std_quantile(pa + w * (pb - pa))
    };
    x.clamp(-QUANTILE_CLAMP, QUANTILE_CLAMP)
}

/// Mean of N(0,1) truncated to `[a, b]`.
pub fn truncated_mean(a: f64, b: f64) -> f64 {
    let mass = std_interval_mass(a, b);
    if mass > 1e-300 {
        (std_pdf(a) - std_pdf(b)) / mass
    } else if a.is_finite() && b.is_finite() {
        0.5 * (a + b)
    } else if a.is_finite() {
        a
    } else {
        b
    }
}

/// Draws from N(0,1) truncated to the open interval `(a, b)`.
///
/// Inverse-CDF inside the bulk; exponential rejection (or uniform rejection for
/// narrow intervals) once the whole interval is more than four standard
/// deviations from the mode.
pub fn sample_truncated_std<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    debug_assert!(a < b, "empty interval ({a}, {b})");
    if a >= FAR_TAIL {
        return sample_right_tail(a, b, rng);
    }
    if b <= -FAR_TAIL {
        return -sample_right_tail(-b, -a, rng);
    }
    for _ in 0..64 {
        let x = truncated_quantile(a, b, rng.random::<f64>());
        if x > a && x < b {
            return x;
        }
    }
    fallback_midpoint(a, b)
}

fn sample_right_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b.is_finite() && 0.5 * (b - a) * (b + a) <= 1.0 {
        // acceptance ≥ e⁻¹
        for _ in 0..1024 {
            let x = a + rng.random::<f64>() * (b - a);
            let log_accept = -0.5 * (x * x - a * a);
            if x > a && x < b && (1.0 - rng.random::<f64>()).ln() <= log_accept {
                return x;
            }
        }
        return fallback_midpoint(a, b);
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    for _ in 0..1024 {
        let z = a - (1.0 - rng.random::<f64>()).ln() / rate;
        if z <= a || z >= b {
            continue;
        }
        let accept = (-0.5 * (z - rate) * (z - rate)).exp();
        if rng.random::<f64>() <= accept {
            return z;
        }
    }
    fallback_midpoint(a, b)
}

fn fallback_midpoint(a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => 0.5 * (a + b),
        (true, false) => a + 1.0 / a.abs().max(1.0),
        (false, true) => b - 1.0 / b.abs().max(1.0),
        (false, false) => 0.0,
    }
}
