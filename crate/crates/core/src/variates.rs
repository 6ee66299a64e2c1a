//! Gamma, Poisson and normal variates with bounded expected work.
//!
//! Gamma uses Marsaglia & Tsang (2000) squeeze-rejection for `shape >= 1`
//! and the `U^{1/shape}` boost below one. Poisson uses sequential-search
//! inversion below rate 10 and Hörmann's PTRS transformed rejection above.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Result};
use crate::rng::RngStream;
use crate::special::ln_gamma;

#[inline]
pub fn standard_normal(rng: &mut RngStream) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub fn exponential(rng: &mut RngStream) -> f64 {
    -rng.uniform().ln()
}

/// Marsaglia–Tsang for `shape >= 1`, unit scale.
#[inline]
fn gamma_large(shape: f64, rng: &mut RngStream) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One `Gamma(shape, scale)` draw.
pub fn sample_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
        return domain(format!("gamma needs shape, scale > 0; got {shape}, {scale}"));
    }
    Ok(gamma_unchecked(shape, scale, rng))
}

#[inline]
pub(crate) fn gamma_unchecked(shape: f64, scale: f64, rng: &mut RngStream) -> f64 {
    if shape == 1.0 {
        return exponential(rng) * scale;
    }
    if shape >= 1.0 {
        return gamma_large(shape, rng) * scale;
    }
    // boost: G(shape) = G(shape + 1) U^{1/shape}, computed in logs
    let g = gamma_large(shape + 1.0, rng);
    let log_u = rng.uniform().ln();
    (g.ln() + log_u / shape).exp() * scale
}

/// One `Poisson(rate)` draw.
pub fn sample_poisson(rate: f64, rng: &mut RngStream) -> Result<u64> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return domain(format!("poisson rate must be finite and >= 0, got {rate}"));
    }
    Ok(poisson_unchecked(rate, rng))
}

#[inline]
pub(crate) fn poisson_unchecked(rate: f64, rng: &mut RngStream) -> u64 {
    if rate == 0.0 {
        return 0;
    }
    if rate < 10.0 {
        let mut k = 0u64;
        let mut p = (-rate).exp();
        let mut cdf = p;
        let u = rng.uniform();
        while u > cdf {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
            if p == 0.0 && u > cdf {
                // round-off exhausted the tail; restart
                return poisson_unchecked(rate, rng);
            }
        }
        return k;
    }
    ptrs(rate, rng)
}

/// Transformed rejection with squeeze (Hörmann 1993), `rate >= 10`.
fn ptrs(rate: f64, rng: &mut RngStream) -> u64 {
    let smu = rate.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    let log_rate = rate.ln();
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -rate + k * log_rate - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn gamma_rejects_bad_params() {
        let mut rng = RngStream::new(0, 0);
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut rng).is_err());
        assert!(sample_poisson(-1.0, &mut rng).is_err());
    }

    #[test]
    fn gamma_small_shape_mean() {
        let mut rng = RngStream::new(3, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_gamma(0.3, 2.0, &mut rng).unwrap()).collect();
        let (m, v) = mean_var(&xs);
        let se = (v / n as f64).sqrt();
        assert!((m - 0.6).abs() < 5.0 * se, "{m}");
        assert!((v - 1.2).abs() < 0.05, "{v}");
    }

    #[test]
    fn tiny_shape_is_finite() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..1000 {
            let g = sample_gamma(1e-8, 1.0, &mut rng).unwrap();
            assert!(g.is_finite() && g >= 0.0);
        }
    }

    #[test]
    fn poisson_zero_rate() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(sample_poisson(0.0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn poisson_large_rate_mean_var() {
        let mut rng = RngStream::new(9, 0);
        let n = 200_000;
        let rate = 37.5;
        let xs: Vec<f64> = (0..n).map(|_| sample_poisson(rate, &mut rng).unwrap() as f64).collect();
        let (m, v) = mean_var(&xs);
        assert!((m - rate).abs() < 5.0 * (rate / n as f64).sqrt());
        assert!((v / rate - 1.0).abs() < 0.02);
    }

    #[test]
    fn poisson_huge_rate_is_constant_time() {
        let mut rng = RngStream::new(9, 1);
        let before = rng.word_pos();
        let k = sample_poisson(1e6, &mut rng).unwrap();
        // a handful of uniforms, not O(rate)
        assert!(rng.word_pos() - before < 200);
        assert!((k as f64 - 1e6).abs() < 10_000.0);
    }
}
