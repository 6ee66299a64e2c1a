//! Monte Carlo checks: batch-means cumulants, two-sample KS distance,
//! rate studies against the normal baseline, and quadrature oracles for
//! the fitted parameters.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, PgnError, Result};
use crate::levy::LevyMeasure1D;
use crate::matching::{fit_default, MatchedParams};
use crate::radial::{delta_covariance, sample_mv, sigma_tau, MvPart, RadialField};
use crate::rng::RngStream;
use crate::sampler::{sample_normal_baseline, sample_pgn};

pub const DEFAULT_BATCHES: usize = 100;
pub const MIN_BATCH_SIZE: usize = 100;
/// Mean of the Kolmogorov distribution, `√(π/2) ln 2`.
const KOLMOGOROV_MEAN: f64 = 0.868_731_160_636_24;

/// A cumulant estimate with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CumulantEstimate {
    pub order: u32,
    pub estimate: f64,
    pub standard_error: f64,
    pub n: usize,
    pub batches: usize,
}

impl CumulantEstimate {
    /// `(estimate - target) / SE`.
    pub fn z(&self, target: f64) -> f64 {
        (self.estimate - target) / self.standard_error
    }
}

/// Cumulants 1..=6 from the central moments of one batch.
fn batch_cumulants(xs: &[f64], j_max: u32) -> [f64; 7] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut mu = [0.0f64; 7];
    for &x in xs {
        let d = x - mean;
        let mut p = d * d;
        for m in mu.iter_mut().take(j_max as usize + 1).skip(2) {
            *m += p;
            p *= d;
        }
    }
    for m in mu.iter_mut() {
        *m /= n;
    }
    let (m2, m3, m4, m5, m6) = (mu[2], mu[3], mu[4], mu[5], mu[6]);
    [
        0.0,
        mean,
        m2,
        m3,
        m4 - 3.0 * m2 * m2,
        m5 - 10.0 * m3 * m2,
        m6 - 15.0 * m4 * m2 - 10.0 * m3 * m3 + 30.0 * m2 * m2 * m2,
    ]
}

/// Cumulants of orders `1..=j_max` (order 1 is the mean), each averaged
/// over `n_batches` contiguous batches.
pub fn empirical_cumulants(
    sample: &[f64],
    j_max: u32,
    n_batches: usize,
) -> Result<Vec<CumulantEstimate>> {
    if !(1..=6).contains(&j_max) {
        return domain(format!("j_max = {j_max} must lie in 1..=6"));
    }
    if n_batches < 2 || sample.len() < n_batches * MIN_BATCH_SIZE {
        return Err(PgnError::InsufficientSample(format!(
            "{} draws for {n_batches} batches (need {} and at least 2 batches)",
            sample.len(),
            n_batches * MIN_BATCH_SIZE
        )));
    }
    let size = sample.len() / n_batches;
    let per_batch: Vec<[f64; 7]> = sample[..size * n_batches]
        .par_chunks(size)
        .map(|b| batch_cumulants(b, j_max))
        .collect();
    let nb = n_batches as f64;
    Ok((1..=j_max)
        .map(|j| {
            let vals = per_batch.iter().map(|k| k[j as usize]);
            let mean = vals.clone().sum::<f64>() / nb;
            let var = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / (nb - 1.0);
            CumulantEstimate {
                order: j,
                estimate: mean,
                standard_error: (var / nb).sqrt(),
                n: sample.len(),
                batches: n_batches,
            }
        })
        .collect())
}

/// `sup_x |F_a(x) - F_b(x)|` of two sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(PgnError::EmptySample);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// Sort in place, then [`ks_two_sample`].
pub fn ks_distance(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<f64> {
    a.par_sort_unstable_by(f64::total_cmp);
    b.par_sort_unstable_by(f64::total_cmp);
    ks_two_sample(&a, &b)
}

/// Worst relative gap between `κ_{j,X_r}`, recomputed by quadrature,
/// and `κ_{j,T_r}` over the matched orders.
pub fn quadrature_match_check(measure: &LevyMeasure1D, params: &MatchedParams) -> Result<f64> {
    let factor = if params.symmetric { 2.0 } else { 1.0 };
    let mut worst: f64 = 0.0;
    for j in 2..params.q {
        if params.symmetric && j % 2 == 1 {
            continue;
        }
        let x = factor * measure.quadrature_power_integral(j as f64, 0.0, params.r)?;
        let t = params.kappa_t(j);
        worst = worst.max((x - t).abs() / x.abs());
    }
    Ok(worst)
}

/// One grid point of a rate study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub r: f64,
    pub dks_pgn: f64,
    pub se_pgn: f64,
    pub dks_normal: f64,
    pub se_normal: f64,
}

/// Weighted least-squares slope of `ln d` on `ln r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub se: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStudyResult {
    pub measure: LevyMeasure1D,
    pub symmetric: bool,
    pub n: usize,
    pub seed: u64,
    pub r_ref: f64,
    /// Expected KS distance between two independent `n`-samples of one law.
    pub noise_floor: f64,
    pub points: Vec<RatePoint>,
    pub slope_pgn: Option<SlopeFit>,
    pub slope_normal: Option<SlopeFit>,
    /// Set when either arm has fewer than two points above three noise floors.
    pub noise_floor_flag: bool,
}

impl RateStudyResult {
    /// `dks_pgn < dks_normal` at every grid point.
    pub fn ordering_holds(&self) -> bool {
        self.points.iter().all(|p| p.dks_pgn < p.dks_normal)
    }

    /// `r, dks_pgn, se, dks_normal, se` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,dks_pgn,se_pgn,dks_normal,se_normal\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                p.r, p.dks_pgn, p.se_pgn, p.dks_normal, p.se_normal
            ));
        }
        out
    }
}

/// Largest standard deviation of a KS distance between two `n`-samples,
/// from the variance of the empirical CDF difference at a fixed point.
fn ks_se(n: usize) -> f64 {
    (0.5 / n as f64).sqrt()
}

/// Weighted least squares of `ln d` on `ln r` with weights `(d/se)²`.
pub fn fit_slope(points: &[(f64, f64, f64)]) -> Option<SlopeFit> {
    if points.len() < 2 {
        return None;
    }
    let rows: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(r, d, se)| (r.ln(), d.ln(), (d / se).powi(2)))
        .collect();
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let xm = rows.iter().map(|r| r.2 * r.0).sum::<f64>() / sw;
    let ym = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / sw;
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - xm).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - xm) * (r.1 - ym)).sum();
    let slope = sxy / sxx;
    Some(SlopeFit {
        slope,
        se: (1.0 / sxx).sqrt(),
        intercept: ym - slope * xm,
        points: rows.len(),
    })
}

fn child_seed(seed: u64, tag: u64) -> u64 {
    RngStream::new(seed, u64::MAX - tag).next_u64()
}

/// Compare PGN and the normal baseline against a fine-truncation PGN
/// reference at `r_ref = min(r_grid) / reference_factor`.
pub fn rate_study(
    measure: &LevyMeasure1D,
    r_grid: &[f64],
    symmetric: bool,
    n: usize,
    reference_factor: f64,
    seed: u64,
) -> Result<RateStudyResult> {
    if r_grid.is_empty() {
        return domain("empty r grid");
    }
    if r_grid.windows(2).any(|w| w[1] >= w[0]) {
        return domain("r grid must be strictly decreasing");
    }
    if r_grid[0] > measure.upper_support() {
        return domain(format!(
            "r = {} exceeds the support bound {}",
            r_grid[0],
            measure.upper_support()
        ));
    }
    if !(reference_factor > 1.0) {
        return domain("reference_factor must exceed 1");
    }
    let r_ref = r_grid[r_grid.len() - 1] / reference_factor;
    let ref_fit = fit_default(measure, r_ref, symmetric)?;
    let mut reference = sample_pgn(measure, &ref_fit, n, child_seed(seed, 0))?.into_values();
    reference.par_sort_unstable_by(f64::total_cmp);

    let mut points = Vec::with_capacity(r_grid.len());
    for (k, &r) in r_grid.iter().enumerate() {
        let fit = fit_default(measure, r, symmetric)?;
        let tag = 2 * k as u64 + 1;
        let mut pgn = sample_pgn(measure, &fit, n, child_seed(seed, tag))?.into_values();
        pgn.par_sort_unstable_by(f64::total_cmp);
        let mut normal =
            sample_normal_baseline(measure, r, symmetric, n, child_seed(seed, tag + 1))?
                .into_values();
        normal.par_sort_unstable_by(f64::total_cmp);
        points.push(RatePoint {
            r,
            dks_pgn: ks_two_sample(&pgn, &reference)?,
            se_pgn: ks_se(n),
            dks_normal: ks_two_sample(&normal, &reference)?,
            se_normal: ks_se(n),
        });
    }
    let noise_floor = KOLMOGOROV_MEAN * (2.0 / n as f64).sqrt();
    let usable = |sel: fn(&RatePoint) -> (f64, f64)| -> Vec<(f64, f64, f64)> {
        points
            .iter()
            .map(|p| {
                let (d, se) = sel(p);
                (p.r, d, se)
            })
            .filter(|&(_, d, _)| d > 3.0 * noise_floor)
            .collect()
    };
    let pgn_pts = usable(|p| (p.dks_pgn, p.se_pgn));
    let normal_pts = usable(|p| (p.dks_normal, p.se_normal));
    Ok(RateStudyResult {
        measure: measure.clone(),
        symmetric,
        n,
        seed,
        r_ref,
        noise_floor,
        noise_floor_flag: pgn_pts.len() < 2 || normal_pts.len() < 2,
        slope_pgn: fit_slope(&pgn_pts),
        slope_normal: fit_slope(&normal_pts),
        points,
    })
}

/// Moment checks on multivariate draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MvCovReport {
    pub n: usize,
    pub d: usize,
    /// Row-major empirical covariance of `T_τ`.
    pub cov_t: Vec<f64>,
    pub sigma: Vec<f64>,
    pub max_z_mean_t: f64,
    pub max_z_cov_t: f64,
    /// `cov(Δ_τ) + cov(T_τ)` against the full second-moment matrix.
    pub max_z_full: f64,
    pub max_z_mean_delta: f64,
}

/// Batch means of `x` and `xx'` entries, with standard errors.
struct MomentStats {
    mean: DVector<f64>,
    mean_se: DVector<f64>,
    cov: DMatrix<f64>,
    cov_se: DMatrix<f64>,
}

fn moment_stats(values: &[f64], d: usize, n_batches: usize) -> Result<MomentStats> {
    let n = values.len() / d;
    if n < n_batches * MIN_BATCH_SIZE {
        return Err(PgnError::InsufficientSample(format!(
            "{n} draws for {n_batches} batches"
        )));
    }
    let size = n / n_batches;
    let per: Vec<(DVector<f64>, DMatrix<f64>)> = values[..size * n_batches * d]
        .par_chunks(size * d)
        .map(|chunk| {
            let mut mean = DVector::zeros(d);
            for row in chunk.chunks(d) {
                mean += DVector::from_column_slice(row);
            }
            mean /= size as f64;
            let mut cov = DMatrix::zeros(d, d);
            for row in chunk.chunks(d) {
                let x = DVector::from_column_slice(row) - &mean;
                cov += &x * x.transpose();
            }
            cov /= size as f64;
            (mean, cov)
        })
        .collect();
    let nb = n_batches as f64;
    let mean = per.iter().fold(DVector::zeros(d), |acc, p| acc + &p.0) / nb;
    let cov = per.iter().fold(DMatrix::zeros(d, d), |acc, p| acc + &p.1) / nb;
    let mean_se = per
        .iter()
        .fold(DVector::zeros(d), |acc: DVector<f64>, p| {
            acc + (&p.0 - &mean).map(|v| v * v)
        })
        .map(|v| (v / (nb - 1.0) / nb).sqrt());
    let cov_se = per
        .iter()
        .fold(DMatrix::zeros(d, d), |acc: DMatrix<f64>, p| {
            acc + (&p.1 - &cov).map(|v| v * v)
        })
        .map(|v| (v / (nb - 1.0) / nb).sqrt());
    Ok(MomentStats {
        mean,
        mean_se,
        cov,
        cov_se,
    })
}

fn max_abs_z(est: &[f64], target: &[f64], se: &[f64]) -> f64 {
    est.iter()
        .zip(target)
        .zip(se)
        .map(|((e, t), s)| if *s > 0.0 { (e - t).abs() / s } else { 0.0 })
        .fold(0.0, f64::max)
}

/// Compare `n` draws of `T_τ` with `Σ_τ`, and `Δ_τ + T_τ` second moments
/// with the quadrature value.
pub fn mv_cov_check(field: &RadialField, n: usize, seed: u64) -> Result<MvCovReport> {
    let d = field.dim();
    let (sigma, _) = sigma_tau(field)?;
    let t = sample_mv(field, MvPart::T, n, child_seed(seed, 0))?;
    let delta = sample_mv(field, MvPart::Delta, n, child_seed(seed, 1))?;
    let st = moment_stats(t.values(), d, DEFAULT_BATCHES)?;
    let sd = moment_stats(delta.values(), d, DEFAULT_BATCHES)?;
    let full = &sigma + delta_covariance(field);
    let sum = &st.cov + &sd.cov;
    let sum_se = st.cov_se.zip_map(&sd.cov_se, |a, b| (a * a + b * b).sqrt());
    let zeros = vec![0.0; d];
    Ok(MvCovReport {
        n,
        d,
        cov_t: st.cov.transpose().as_slice().to_vec(),
        sigma: sigma.transpose().as_slice().to_vec(),
        max_z_mean_t: max_abs_z(st.mean.as_slice(), &zeros, st.mean_se.as_slice()),
        max_z_cov_t: max_abs_z(st.cov.as_slice(), sigma.as_slice(), st.cov_se.as_slice()),
        max_z_full: max_abs_z(sum.as_slice(), full.as_slice(), sum_se.as_slice()),
        max_z_mean_delta: max_abs_z(sd.mean.as_slice(), &zeros, sd.mean_se.as_slice()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::match5;
    use crate::sampler::sample_scalar;
    use crate::variates::{sample_gamma, sample_poisson, standard_normal};

    #[test]
    fn normal_higher_cumulants_vanish() {
        let xs = sample_scalar(1_000_000, 1, standard_normal);
        let est = empirical_cumulants(&xs, 4, 100).unwrap();
        assert!(est[1].z(1.0).abs() < 5.0);
        assert!(est[2].z(0.0).abs() < 5.0);
        assert!(est[3].z(0.0).abs() < 5.0);
    }

    #[test]
    fn poisson_and_gamma_cumulants() {
        let xs = sample_scalar(1_000_000, 2, |r| sample_poisson(3.0, r).unwrap() as f64);
        let est = empirical_cumulants(&xs, 4, 100).unwrap();
        for e in &est[1..] {
            assert!(e.z(3.0).abs() < 5.0, "{e:?}");
        }
        let xs = sample_scalar(1_000_000, 3, |r| sample_gamma(2.0, 1.0, r).unwrap());
        let est = empirical_cumulants(&xs, 3, 100).unwrap();
        assert!(est[1].z(2.0).abs() < 5.0);
        assert!(est[2].z(4.0).abs() < 5.0);
    }

    #[test]
    fn insufficient_sample() {
        assert!(matches!(
            empirical_cumulants(&[0.0; 500], 2, 100),
            Err(PgnError::InsufficientSample(_))
        ));
    }

    #[test]
    fn ks_basics() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!(matches!(ks_two_sample(&[], &a), Err(PgnError::EmptySample)));
        let x = sample_scalar(200_000, 4, standard_normal);
        let y: Vec<f64> = sample_scalar(200_000, 5, standard_normal)
            .into_iter()
            .map(|v| v + 1.0)
            .collect();
        let d = ks_distance(x, y).unwrap();
        assert!((d - 0.3829).abs() < 0.01, "{d}");
    }

    #[test]
    fn match_check_detects_perturbation() {
        let m = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
        let mut p = match5(&m, 1.0).unwrap();
        assert!(quadrature_match_check(&m, &p).unwrap() < 1e-9);
        p.s *= 1.01;
        assert!(quadrature_match_check(&m, &p).unwrap() > 1e-3);
    }

    #[test]
    fn slope_fit_recovers_power() {
        let pts: Vec<(f64, f64, f64)> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&r: &f64| (r, 0.3 * r.powf(1.5), 1e-4))
            .collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12);
    }

    #[test]
    fn small_n_hits_noise_floor() {
        let m = LevyMeasure1D::trunc_stable(1.0, 0.5, 1.0);
        let res = rate_study(&m, &[0.4, 0.2, 0.1, 0.05], false, 1000, 100.0, 7).unwrap();
        assert!(res.noise_floor_flag);
        assert!(res.points.iter().all(|p| (0.0..=1.0).contains(&p.dks_pgn)));
    }
}
