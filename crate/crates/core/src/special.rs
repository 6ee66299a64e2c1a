//! Thin wrappers over the special functions the crate needs.

use statrs::function::{erf, gamma};

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    gamma::gamma(x)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma::gamma_lr(a, x)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// `n!` as a float.
pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `∫_lo^hi u^(e-1) du`, with `lo == 0` allowed when `e > 0`.
pub(crate) fn pow_segment(e: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo == 0.0 {
        debug_assert!(e > 0.0);
        return hi.powf(e) / e;
    }
    let log_ratio = (hi / lo).ln();
    if e == 0.0 {
        return log_ratio;
    }
    // hi^e - lo^e = lo^e * expm1(e * ln(hi/lo)); stable for tiny e
    lo.powf(e) * (e * log_ratio).exp_m1() / e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_p_at_one_one() {
        assert!((gamma_p(1.0, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn pow_segment_small_exponent_matches_log() {
        let a = pow_segment(1e-12, 0.5, 2.0);
        assert!((a - 4f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn factorials() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(6), 720.0);
    }
}
