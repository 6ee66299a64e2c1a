//! Samplers for `Y_r`, `T_r`, the large-jump residual `Δ_r`, and the
//! assembled approximation `Δ_r + T_r`.

use rayon::prelude::*;
use serde::Serialize;

use crate::batch::{spec_hash, SampleBatch};
use crate::error::{domain, Result};
use crate::levy::LevyMeasure1D;
use crate::matching::MatchedParams;
use crate::rng::{RngStream, CHUNK_SIZE};
use crate::special::pow_segment;
use crate::variates::{gamma_unchecked, poisson_unchecked, standard_normal};

/// Acceptance rate below which the two-piece envelope is refined.
const MIN_ACCEPTANCE: f64 = 0.1;
const FINE_SEGMENTS: usize = 64;
const ENVELOPE_PROBES: usize = 256;
const ENVELOPE_SAFETY: f64 = 1.05;

/// Draws of the Gamma-type part `Y_r` (and `T_r` when `sigma > 0`).
#[derive(Debug, Clone)]
pub struct GammaPart {
    p: f64,
    s: f64,
    m: f64,
    rate: f64,
    mean: f64,
    sigma: f64,
    symmetric: bool,
}

impl GammaPart {
    pub fn new(params: &MatchedParams) -> Result<Self> {
        if !(params.p >= -1.0 && params.s > 0.0 && params.m >= 0.0 && params.sigma >= 0.0) {
            return domain(format!(
                "invalid matched parameters p={}, s={}, m={}, sigma={}",
                params.p, params.s, params.m, params.sigma
            ));
        }
        let rate = if params.p > -1.0 { params.jump_rate() } else { 0.0 };
        Ok(GammaPart {
            p: params.p,
            s: params.s,
            m: params.m,
            rate,
            mean: params.jump_mean(),
            sigma: params.sigma,
            symmetric: params.symmetric,
        })
    }

    #[inline]
    fn one_sided(&self, rng: &mut RngStream) -> f64 {
        if self.m == 0.0 {
            return 0.0;
        }
        let u = if self.p > -1.0 {
            let n = poisson_unchecked(self.rate, rng);
            if n == 0 {
                0.0
            } else {
                gamma_unchecked(n as f64 * (self.p + 1.0), self.s, rng)
            }
        } else {
            gamma_unchecked(self.m, self.s, rng)
        };
        u - self.mean
    }

    /// One draw of `Y_r`.
    #[inline]
    pub fn draw_y(&self, rng: &mut RngStream) -> f64 {
        if self.symmetric {
            self.one_sided(rng) - self.one_sided(rng)
        } else {
            self.one_sided(rng)
        }
    }

    /// One draw of `T_r = Y_r + σZ`.
    #[inline]
    pub fn draw_t(&self, rng: &mut RngStream) -> f64 {
        let y = self.draw_y(rng);
        if self.sigma > 0.0 {
            y + self.sigma * standard_normal(rng)
        } else {
            y
        }
    }
}

/// One draw of `Y_r`.
pub fn sample_yr(params: &MatchedParams, rng: &mut RngStream) -> Result<f64> {
    Ok(GammaPart::new(params)?.draw_y(rng))
}

/// One draw of `T_r = Y_r + σZ`.
pub fn sample_tr(params: &MatchedParams, rng: &mut RngStream) -> Result<f64> {
    Ok(GammaPart::new(params)?.draw_t(rng))
}

/// Piecewise power-law dominating function `M_k u^{-β_k}` on `[x_k, x_{k+1}]`.
#[derive(Debug, Clone)]
struct Envelope {
    knots: Vec<f64>,
    beta: Vec<f64>,
    scale: Vec<f64>,
    cum: Vec<f64>,
    total: f64,
}

impl Envelope {
    fn build(measure: &LevyMeasure1D, knots: Vec<f64>) -> Envelope {
        let segs = knots.len() - 1;
        let mut beta = Vec::with_capacity(segs);
        let mut scale = Vec::with_capacity(segs);
        let mut cum = Vec::with_capacity(segs);
        let mut total = 0.0;
        for k in 0..segs {
            let (x0, x1) = (knots[k], knots[k + 1]);
            let log_ratio = (x1 / x0).ln();
            let probes: Vec<(f64, f64)> = (0..=ENVELOPE_PROBES)
                .map(|i| {
                    // stay just inside the closed segment so endpoint zeros of f don't matter
                    let t = (i as f64 / ENVELOPE_PROBES as f64).clamp(1e-9, 1.0 - 1e-9);
                    let u = x0 * (t * log_ratio).exp();
                    (u, measure.density(u))
                })
                .collect();
            // pick the exponent with the smallest dominating mass among a few chords
            let chord = |i: usize, j: usize| -> Option<f64> {
                let (u0, f0) = probes[i];
                let (u1, f1) = probes[j];
                (f0 > 0.0 && f1 > 0.0).then(|| -(f1 / f0).ln() / (u1 / u0).ln())
            };
            let p = ENVELOPE_PROBES;
            let candidates = [
                chord(0, p),
                chord(0, p / 2),
                chord(p / 4, 3 * p / 4),
                chord(p / 2, p),
                Some(measure.origin_exponent() + 1.0),
                Some(0.0),
            ];
            let (b, m, mass) = candidates
                .iter()
                .flatten()
                .filter(|b| b.is_finite())
                .map(|&b| {
                    let m = ENVELOPE_SAFETY
                        * probes.iter().map(|&(u, f)| f * u.powf(b)).fold(0.0, f64::max);
                    (b, m, m * pow_segment(1.0 - b, x0, x1))
                })
                .filter(|t| t.2.is_finite())
                .min_by(|x, y| x.2.total_cmp(&y.2))
                .unwrap_or((0.0, 0.0, 0.0));
            total += mass;
            beta.push(b);
            scale.push(m);
            cum.push(total);
        }
        Envelope {
            knots,
            beta,
            scale,
            cum,
            total,
        }
    }

    #[inline]
    fn draw(&self, measure: &LevyMeasure1D, rng: &mut RngStream) -> f64 {
        loop {
            let target = rng.uniform() * self.total;
            let k = self.cum.partition_point(|&c| c < target).min(self.cum.len() - 1);
            let (x0, x1) = (self.knots[k], self.knots[k + 1]);
            let e = 1.0 - self.beta[k];
            let v = rng.uniform();
            let log_ratio = (x1 / x0).ln();
            let u = if (e * log_ratio).abs() < 1e-12 {
                x0 * (v * log_ratio).exp()
            } else {
                x0 * ((1.0 + v * (e * log_ratio).exp_m1()).ln() / e).exp()
            };
            let g = self.scale[k] * u.powf(-self.beta[k]);
            if rng.uniform() * g <= measure.density(u) {
                return u;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum JumpLaw {
    None,
    /// Inverse CDF of the normalized `u^{-a-1}` on `[r, r0]`.
    Power { a: f64, lo_pow: f64, span: f64 },
    Envelope(Envelope),
}

/// Compound Poisson sampler for `Δ_r`, the centered jumps of size `>= r`.
#[derive(Debug, Clone)]
pub struct TailSampler {
    measure: LevyMeasure1D,
    rate: f64,
    centre: f64,
    law: JumpLaw,
    acceptance: f64,
}

impl TailSampler {
    pub fn new(measure: &LevyMeasure1D, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return domain(format!("tail radius must be > 0, got {r}"));
        }
        let upper = measure.upper_support();
        let rate = measure.tail_mass(r)?;
        let centre = measure.tail_mean(r)?;
        if r >= upper || rate == 0.0 {
            return Ok(TailSampler {
                measure: measure.clone(),
                rate: 0.0,
                centre: 0.0,
                law: JumpLaw::None,
                acceptance: 1.0,
            });
        }
        let (law, acceptance) = match *measure {
            LevyMeasure1D::TruncStable { a, r0, .. } => {
                let lo_pow = r.powf(-a);
                (
                    JumpLaw::Power {
                        a,
                        lo_pow,
                        span: lo_pow - r0.powf(-a),
                    },
                    1.0,
                )
            }
            _ => {
                let env = Envelope::build(measure, vec![r, 0.5 * (r + upper), upper]);
                let acc = rate / env.total;
                if acc >= MIN_ACCEPTANCE {
                    (JumpLaw::Envelope(env), acc)
                } else {
                    let ratio = upper / r;
                    let knots = (0..=FINE_SEGMENTS)
                        .map(|i| r * ratio.powf(i as f64 / FINE_SEGMENTS as f64))
                        .collect();
                    let env = Envelope::build(measure, knots);
                    let acc = rate / env.total;
                    (JumpLaw::Envelope(env), acc)
                }
            }
        };
        Ok(TailSampler {
            measure: measure.clone(),
            rate,
            centre,
            law,
            acceptance,
        })
    }

    /// Poisson rate of the large jumps.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Centering constant `∫_{u>=r} u λ(du)`.
    pub fn centre(&self) -> f64 {
        self.centre
    }

    /// Rejection acceptance rate (1 for closed-form inversion).
    pub fn acceptance(&self) -> f64 {
        self.acceptance
    }

    #[inline]
    fn jump(&self, rng: &mut RngStream) -> f64 {
        match self.law {
            JumpLaw::None => 0.0,
            JumpLaw::Power { a, lo_pow, span } => {
                let x = lo_pow - rng.uniform() * span;
                if a == 1.0 {
                    1.0 / x
                } else if a == 0.5 {
                    1.0 / (x * x)
                } else {
                    x.powf(-1.0 / a)
                }
            }
            JumpLaw::Envelope(ref env) => env.draw(&self.measure, rng),
        }
    }

    /// One draw of `Δ_r`.
    #[inline]
    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        if self.rate == 0.0 {
            return 0.0;
        }
        let n = poisson_unchecked(self.rate, rng);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += self.jump(rng);
        }
        sum - self.centre
    }
}

/// One draw of `Δ_r`. Builds the tail sampler on every call; use
/// [`TailSampler`] directly in loops.
pub fn sample_delta_r(measure: &LevyMeasure1D, r: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(TailSampler::new(measure, r)?.draw(rng))
}

/// The assembled approximation `Δ_r + T_r`.
///
/// For symmetric fits the law is `X⁽¹⁾ − X⁽²⁾`, so two independent
/// one-sided residuals are drawn.
#[derive(Debug, Clone)]
pub struct PgnSampler {
    tail: TailSampler,
    gamma: GammaPart,
    symmetric: bool,
}

impl PgnSampler {
    pub fn new(measure: &LevyMeasure1D, params: &MatchedParams) -> Result<Self> {
        Ok(PgnSampler {
            tail: TailSampler::new(measure, params.r)?,
            gamma: GammaPart::new(params)?,
            symmetric: params.symmetric,
        })
    }

    pub fn tail(&self) -> &TailSampler {
        &self.tail
    }

    #[inline]
    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        let delta = if self.symmetric {
            self.tail.draw(rng) - self.tail.draw(rng)
        } else {
            self.tail.draw(rng)
        };
        delta + self.gamma.draw_t(rng)
    }
}

/// Classical second-order approximation `Δ_r + √κ₂ Z`.
#[derive(Debug, Clone)]
pub struct NormalBaseline {
    tail: TailSampler,
    sd: f64,
    symmetric: bool,
}

impl NormalBaseline {
    pub fn new(measure: &LevyMeasure1D, r: f64, symmetric: bool) -> Result<Self> {
        let k2 = measure.partial_cumulant(2, r)?;
        let k2 = if symmetric { 2.0 * k2 } else { k2 };
        Ok(NormalBaseline {
            tail: TailSampler::new(measure, r)?,
            sd: k2.sqrt(),
            symmetric,
        })
    }

    #[inline]
    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        let delta = if self.symmetric {
            self.tail.draw(rng) - self.tail.draw(rng)
        } else {
            self.tail.draw(rng)
        };
        delta + self.sd * standard_normal(rng)
    }
}

/// Fill `n` rows of width `d` in parallel. Chunk `k` (of
/// [`CHUNK_SIZE`] rows) reads stream `k` only, so the output does not
/// depend on how many workers run.
pub fn fill_parallel<F>(n: usize, d: usize, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut RngStream, &mut [f64]) + Sync,
{
    let mut out = vec![0.0; n * d];
    out.par_chunks_mut(CHUNK_SIZE * d.max(1))
        .enumerate()
        .for_each(|(k, chunk)| {
            let mut rng = RngStream::new(seed, k as u64);
            for row in chunk.chunks_mut(d.max(1)) {
                draw(&mut rng, row);
            }
        });
    out
}

/// `n` scalar draws, seed-deterministic and thread-count independent.
pub fn sample_scalar<F>(n: usize, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    fill_parallel(n, 1, seed, |rng, row| row[0] = draw(rng))
}

#[derive(Serialize)]
struct PgnSpec<'a> {
    kind: &'static str,
    measure: &'a LevyMeasure1D,
    params: Option<&'a MatchedParams>,
    r: f64,
    symmetric: bool,
}

/// `n` i.i.d. draws of `Δ_r + T_r`.
pub fn sample_pgn(
    measure: &LevyMeasure1D,
    params: &MatchedParams,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let sampler = PgnSampler::new(measure, params)?;
    let values = sample_scalar(n, seed, |rng| sampler.draw(rng));
    let hash = spec_hash(&PgnSpec {
        kind: "pgn",
        measure,
        params: Some(params),
        r: params.r,
        symmetric: params.symmetric,
    })?;
    SampleBatch::new(values, 1, seed, hash)
}

/// `n` i.i.d. draws of the normal baseline `Δ_r + √κ₂ Z`.
pub fn sample_normal_baseline(
    measure: &LevyMeasure1D,
    r: f64,
    symmetric: bool,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let sampler = NormalBaseline::new(measure, r, symmetric)?;
    let values = sample_scalar(n, seed, |rng| sampler.draw(rng));
    let hash = spec_hash(&PgnSpec {
        kind: "normal_baseline",
        measure,
        params: None,
        r,
        symmetric,
    })?;
    SampleBatch::new(values, 1, seed, hash)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::match4;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn zero_tail_at_upper_support() {
        let ts = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(sample_delta_r(&ts, 1.0, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn delta_mean_and_variance() {
        let ts = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
        let tail = TailSampler::new(&ts, 0.5).unwrap();
        let xs = sample_scalar(400_000, 5, |rng| tail.draw(rng));
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 5.0 * (v / xs.len() as f64).sqrt());
        assert!((v - 0.5).abs() < 0.01, "{v}");
    }

    #[test]
    fn envelope_tail_matches_moments() {
        let ls = LevyMeasure1D::LogSingular { c: 2.0 };
        let r = 0.01;
        let tail = TailSampler::new(&ls, r).unwrap();
        assert!(tail.acceptance() > MIN_ACCEPTANCE, "{}", tail.acceptance());
        let xs = sample_scalar(400_000, 6, |rng| tail.draw(rng));
        let (m, v) = mean_var(&xs);
        let target = ls.tail_moment(2, r).unwrap();
        assert!(m.abs() < 5.0 * (v / xs.len() as f64).sqrt());
        assert!((v / target - 1.0).abs() < 0.02, "{v} vs {target}");
    }

    #[test]
    fn y_variance_example() {
        let ts = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
        let params = match4(&ts, 1.0, 4.0).unwrap();
        let g = GammaPart::new(&params).unwrap();
        let xs = sample_scalar(400_000, 8, |rng| g.draw_y(rng));
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 5.0 * (v / xs.len() as f64).sqrt());
        assert!((v - 6.0 / 7.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn p_minus_one_route() {
        let params = MatchedParams {
            p: -1.0,
            s: 0.5,
            m: 3.0,
            sigma: 0.0,
            r: 1.0,
            q: 5,
            symmetric: false,
            kappa: vec![],
            residual: 0.0,
        };
        let g = GammaPart::new(&params).unwrap();
        let xs = sample_scalar(200_000, 2, |rng| g.draw_y(rng));
        let (m, v) = mean_var(&xs);
        // Gamma(3, 0.5) centred: variance 0.75
        assert!(m.abs() < 0.01);
        assert!((v - 0.75).abs() < 0.02);
    }

    #[test]
    fn empty_batch() {
        let ts = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
        let params = match4(&ts, 1.0, 4.0).unwrap();
        let b = sample_pgn(&ts, &params, 0, 1).unwrap();
        assert_eq!(b.n(), 0);
    }
}
