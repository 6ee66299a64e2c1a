//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if
//! any criterion fails.

use pgn::bounds::{dtv_bound_1d, mv_moment_factor, q_floor_sq, stable_bound_closed_form};
use pgn::levy::LevyMeasure1D;
use pgn::matching::{match5, match_sym9, stable_p_sym};
use pgn::radial::{calibration_residual, radial_match, sample_mv, sigma_tau, MvPart, RadialLevySpec};
use pgn::rng::with_threads;
use pgn::sampler::sample_pgn;
use pgn::sphere::{DirFn, SphereMeasure};
use pgn::validation::{
    empirical_cumulants, fit_slope, quadrature_match_check, rate_study, RateStudyResult,
    DEFAULT_BATCHES,
};

const A_GRID: [f64; 3] = [0.5, 1.0, 1.5];
const C_GRID: [f64; 3] = [0.5, 1.0, 2.0];
const R_GRID: [f64; 3] = [0.5, 0.1, 0.01];
const MC_N: usize = 10_000_000;
const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn ts(c: f64, a: f64) -> LevyMeasure1D {
    LevyMeasure1D::trunc_stable(c, a, 1.0)
}

fn grid() -> impl Iterator<Item = (f64, f64, f64)> {
    A_GRID
        .into_iter()
        .flat_map(|a| C_GRID.into_iter().flat_map(move |c| R_GRID.into_iter().map(move |r| (a, c, r))))
}

fn criterion_1() -> Outcome {
    let (mut p_err, mut resid) = (0.0f64, 0.0f64);
    for (a, c, r) in grid() {
        let m = ts(c, a);
        let fit = match5(&m, r).expect("match5");
        p_err = p_err.max((fit.p - (a * a - 8.0 * a + 11.0)).abs());
        resid = resid.max(quadrature_match_check(&m, &fit).expect("quadrature"));
    }
    Outcome {
        pass: p_err <= 1e-10 && resid < 1e-9,
        detail: format!("max |p - (a²-8a+11)| = {p_err:.1e}, max residual orders 2-5 = {resid:.1e}"),
    }
}

/// Root of `(p+7)(p+8) = ρ (p+5)(p+6)` above -1.
fn sym_p_quadratic(rho: f64) -> f64 {
    let (qa, qb, qc) = (1.0 - rho, 15.0 - 11.0 * rho, 56.0 - 30.0 * rho);
    let disc = (qb * qb - 4.0 * qa * qc).sqrt();
    [(-qb + disc) / (2.0 * qa), (-qb - disc) / (2.0 * qa)]
        .into_iter()
        .filter(|p| *p > -1.0)
        .fold(f64::NAN, f64::max)
}

fn criterion_2() -> Outcome {
    let mut resid = 0.0f64;
    let mut p_err = 0.0f64;
    for (a, c, r) in grid() {
        let m = ts(c, a);
        let fit = match_sym9(&m, r).expect("match_sym9");
        resid = resid.max(quadrature_match_check(&m, &fit).expect("quadrature"));
        if a == 1.0 {
            p_err = p_err.max((fit.p - (10.0 + 526f64.sqrt()) / 2.0).abs());
        }
    }
    let oracle = sym_p_quadratic(25.0 / 21.0);
    let closed = stable_p_sym(1.0).expect("stable_p_sym");
    let oracle_err = (oracle - (10.0 + 526f64.sqrt()) / 2.0).abs().max((closed - oracle).abs());
    Outcome {
        pass: resid < 1e-9 && p_err <= 1e-9 && oracle_err <= 1e-9,
        detail: format!(
            "max residual even orders 2-8 = {resid:.1e}, |p - (10+√526)/2| = {p_err:.1e}, quadratic oracle gap {oracle_err:.1e}"
        ),
    }
}

fn criterion_3_batches() -> (Vec<f64>, Vec<f64>) {
    let m = ts(1.0, 1.0);
    let asym = sample_pgn(&m, &match5(&m, 1.0).unwrap(), MC_N, SEED).unwrap();
    let sym = sample_pgn(&m, &match_sym9(&m, 1.0).unwrap(), MC_N, SEED + 1).unwrap();
    (asym.into_values(), sym.into_values())
}

fn criterion_3(asym: &[f64], sym: &[f64]) -> Outcome {
    let est = empirical_cumulants(asym, 4, DEFAULT_BATCHES).unwrap();
    let targets = [(2, 1.0), (3, 0.5), (4, 1.0 / 3.0)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (j, t) in targets {
        let z = est[j - 1].z(t);
        pass &= z.abs() < 5.0;
        parts.push(format!("κ{j} z={z:+.2}"));
    }
    let est = empirical_cumulants(sym, 5, DEFAULT_BATCHES).unwrap();
    for j in [3, 5] {
        let z = est[j - 1].z(0.0);
        pass &= z.abs() < 5.0;
        parts.push(format!("sym κ{j} z={z:+.2}"));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for (a, c, r) in grid() {
        let m = ts(c, a);
        let rep = dtv_bound_1d(&m, &match5(&m, r).unwrap()).unwrap();
        let cf = stable_bound_closed_form(a, c, r, rep.qs[&5], rep.qs[&6], rep.qs[&7]);
        worst = worst.max((rep.dtv_bound - cf).abs() / cf);
    }
    let a1 = pgn::bounds::stable_bound_a(1.0);
    Outcome {
        pass: worst < 1e-8 && (a1 - 5.0 / 24.0).abs() < 1e-15,
        detail: format!("max relative gap {worst:.1e}, A(1) = {a1}"),
    }
}

fn log_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (hi.ln() + (lo.ln() - hi.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64, f64)> = xs.iter().zip(ys).map(|(&x, &y)| (x, y, y)).collect();
    fit_slope(&pts).expect("slope").slope
}

fn criterion_5() -> Outcome {
    let rs = log_grid(1e-1, 1e-3, 21);
    let mut pass = true;
    let mut parts = Vec::new();
    for a in A_GRID {
        let m = ts(1.0, a);
        let asym: Vec<f64> = rs
            .iter()
            .map(|&r| dtv_bound_1d(&m, &match5(&m, r).unwrap()).unwrap().dtv_bound)
            .collect();
        let sym: Vec<f64> = rs
            .iter()
            .map(|&r| dtv_bound_1d(&m, &match_sym9(&m, r).unwrap()).unwrap().dtv_bound)
            .collect();
        let (sa, ss) = (ols_slope(&rs, &asym), ols_slope(&rs, &sym));
        let ok = (sa - 2.0 * a).abs() <= 0.02 && (ss - 4.0 * a).abs() <= 0.05;
        pass &= ok;
        parts.push(format!("a={a}: {sa:.3} vs {:.1}, sym {ss:.3} vs {:.1}", 2.0 * a, 4.0 * a));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_6() -> Outcome {
    let m = ts(1.0, 1.0);
    let rs = log_grid(1e-1, 1e-5, 17);
    let mut pass = true;
    let mut worst_small = 0.0f64;
    let mut prev = [f64::INFINITY; 3];
    for &r in &rs {
        let rep = dtv_bound_1d(&m, &match5(&m, r).unwrap()).unwrap();
        for (k, j) in (5..=7).enumerate() {
            let gap = (rep.qs[&j].powi(2) / q_floor_sq(j) - 1.0).abs();
            pass &= gap <= prev[k] * (1.0 + 1e-9) + 1e-12;
            prev[k] = gap;
            if r <= 1e-3 * (1.0 + 1e-12) {
                worst_small = worst_small.max(gap);
            }
        }
    }
    pass &= worst_small <= 0.05;
    Outcome {
        pass,
        detail: format!("max |Q_j²/floor - 1| for r ≤ 1e-3, j=5..7: {worst_small:.2e}; monotone approach {pass}"),
    }
}

fn rate_runs() -> Vec<RateStudyResult> {
    [0.5, 1.0]
        .into_iter()
        .map(|a| rate_study(&ts(1.0, a), &[0.4, 0.2, 0.1, 0.05], false, MC_N, 100.0, SEED + 7).unwrap())
        .collect()
}

fn criterion_7(runs: &[RateStudyResult]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (a, res) in [0.5, 1.0].into_iter().zip(runs) {
        let ordering = res.ordering_holds();
        let (sp, sn) = (res.slope_pgn.map(|s| s.slope), res.slope_normal.map(|s| s.slope));
        let gap_ok = matches!((sp, sn), (Some(p), Some(n)) if p - n >= 0.5);
        let normal_ok = a != 0.5 || sn.is_some_and(|s| (s - 0.25).abs() <= 0.15);
        pass &= ordering && gap_ok && normal_ok && !res.noise_floor_flag;
        let dists: Vec<String> = res
            .points
            .iter()
            .map(|p| format!("{:.1e}/{:.1e}", p.dks_pgn, p.dks_normal))
            .collect();
        parts.push(format!(
            "a={a}: ordering {ordering}, slope pgn {sp:.3?} normal {sn:.3?}, noise flag {}, pgn/normal [{}]",
            res.noise_floor_flag,
            dists.join(" ")
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn circle(a: f64) -> RadialLevySpec {
    RadialLevySpec {
        nu: SphereMeasure::UniformSpherical { d: 2, total_mass: 1.0 },
        a: DirFn::constant(a),
        c: DirFn::constant(1.0),
        r0: 1.0,
        symmetric: true,
        direction_independent: true,
    }
}

const MV_TAU: f64 = 0.1;
const MV_N: usize = 1_000_000;

fn criterion_8_batch() -> (Vec<f64>, u64) {
    let field = radial_match(&circle(1.0), MV_TAU).unwrap();
    let batch = sample_mv(&field, MvPart::T, MV_N, SEED + 3).unwrap();
    (batch.into_values(), field.clamp_count())
}

fn criterion_8(values: &[f64], clamped: u64) -> Outcome {
    let field = radial_match(&circle(1.0), MV_TAU).unwrap();
    let k = &field.k;
    let k_exact = k[(0, 0)] == 0.5 && k[(1, 1)] == 0.5 && k[(0, 1)] == 0.0 && k[(1, 0)] == 0.0;
    let cal = calibration_residual(&field, 256).unwrap();
    let (sigma, _) = sigma_tau(&field).unwrap();

    // batch means over coordinates and products
    let nb = DEFAULT_BATCHES;
    let size = MV_N / nb;
    let stats: Vec<[f64; 5]> = values
        .chunks(2 * size)
        .map(|b| {
            let n = size as f64;
            let (mut m0, mut m1) = (0.0, 0.0);
            for x in b.chunks(2) {
                m0 += x[0];
                m1 += x[1];
            }
            let (m0, m1) = (m0 / n, m1 / n);
            let (mut c00, mut c01, mut c11) = (0.0, 0.0, 0.0);
            for x in b.chunks(2) {
                let (u, v) = (x[0] - m0, x[1] - m1);
                c00 += u * u;
                c01 += u * v;
                c11 += v * v;
            }
            [m0, m1, c00 / n, c01 / n, c11 / n]
        })
        .collect();
    let target = [0.0, 0.0, sigma[(0, 0)], sigma[(0, 1)], sigma[(1, 1)]];
    let mut z = [0.0f64; 5];
    for (k, t) in target.iter().enumerate() {
        let vals: Vec<f64> = stats.iter().map(|s| s[k]).collect();
        let mean = vals.iter().sum::<f64>() / nb as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nb as f64 - 1.0);
        z[k] = (mean - t) / (var / nb as f64).sqrt();
    }
    let max_mean = z[0].abs().max(z[1].abs());
    let max_cov = z[2..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Outcome {
        pass: k_exact && cal < 1e-8 && max_mean < 5.0 && max_cov < 5.0 && clamped == 0,
        detail: format!(
            "K_ν = I/2 {k_exact}, calibration {cal:.1e}, mean max z {max_mean:.2}, cov max z {max_cov:.2}, clamped proposals {clamped}"
        ),
    }
}

fn criterion_9() -> Outcome {
    let q = 10;
    let taus = log_grid(1e-2, 1e-4, 9);
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [0.5, 1.0] {
        let spec = circle(a);
        let factors: Vec<f64> = taus
            .iter()
            .map(|&t| {
                let field = radial_match(&spec, t).unwrap();
                let (_, am) = sigma_tau(&field).unwrap();
                mv_moment_factor(&field, &am, q).unwrap()
            })
            .collect();
        let slope = ols_slope(&taus, &factors);
        let want = (q as f64 - 2.0) * a / (2.0 - a);
        pass &= (slope - want).abs() <= 0.05;
        parts.push(format!("a={a}: slope {slope:.4} vs {want:.4}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn report(n: u32, name: &str, o: &Outcome, failed: &mut Vec<u32>) {
    println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    if !o.pass {
        failed.push(n);
    }
}

fn main() {
    let mut failed = Vec::new();
    report(1, "matching exactness", &criterion_1(), &mut failed);
    report(2, "symmetric matching", &criterion_2(), &mut failed);

    let (asym, sym) = with_threads(1, criterion_3_batches);
    report(3, "sampler cumulant fidelity", &criterion_3(&asym, &sym), &mut failed);

    report(4, "bound closed form", &criterion_4(), &mut failed);
    report(5, "bound rate", &criterion_5(), &mut failed);
    report(6, "Q_j limit", &criterion_6(), &mut failed);

    let runs = with_threads(1, rate_runs);
    report(7, "rate study ordering", &criterion_7(&runs), &mut failed);

    let (mv, clamped) = with_threads(1, criterion_8_batch);
    report(8, "multivariate construction", &criterion_8(&mv, clamped), &mut failed);

    report(9, "moment factor rate", &criterion_9(), &mut failed);

    let (asym8, sym8) = with_threads(8, criterion_3_batches);
    let runs8 = with_threads(8, rate_runs);
    let (mv8, _) = with_threads(8, criterion_8_batch);
    let same3 = bits(&asym8) == bits(&asym) && bits(&sym8) == bits(&sym);
    let same7 = runs8 == runs;
    let same8 = bits(&mv8) == bits(&mv);
    let det = Outcome {
        pass: same3 && same7 && same8,
        detail: format!("1 vs 8 threads identical: cumulant draws {same3}, rate study {same7}, mv draws {same8}"),
    };
    report(10, "determinism", &det, &mut failed);

    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
