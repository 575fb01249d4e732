//! Log-space primitives shared by the DP recursions and the EM accumulators.

/// Additive identity of log-space probability: log(0).
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// log(exp(a) + exp(b)) without overflow; LOG_ZERO absorbs.
#[inline]
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// log(sum_i exp(x_i)) over a slice; returns LOG_ZERO for an empty slice or
/// all-LOG_ZERO input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(LOG_ZERO, f64::max);
    if m == LOG_ZERO {
        return LOG_ZERO;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// ln(x), mapping 0 to LOG_ZERO instead of producing -inf via the libm path
/// for negative zero, and rejecting negatives loudly in debug builds.
#[inline]
pub fn ln_prob(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "probability must be non-negative, got {x}");
    if x <= 0.0 {
        LOG_ZERO
    } else {
        x.ln()
    }
}
