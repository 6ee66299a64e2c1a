//! Cumulant matching of the small-jump part.
//!
//! The small jumps `X_r` (Lévy measure `λ` restricted to `(0, r)`) are
//! replaced by `T_r = Y_r + σZ`, where `Y_r` has Lévy density
//! `m u^p e^{-u/s}` on `(0, ∞)` and `Z` is standard normal. The functions in
//! this module choose `(p, s, m, σ)` so that the cumulants of `X_r` and
//! `T_r` agree up to a given order:
//!
//! | fit | matched orders | `p` |
//! |---|---|---|
//! | [`match4`] | 2..=4 | caller supplied |
//! | [`match5`] | 2..=5 | solved from `κ3 κ5 / κ4²` |
//! | [`match_sym7`] | 2..=7 (odd vanish) | caller supplied |
//! | [`match_sym9`] | 2..=9 (odd vanish) | solved from `κ4 κ8 / κ6²` |
//!
//! In the symmetric fits the measure is the one-sided factor of
//! `X = X⁽¹⁾ − X⁽²⁾` and every `κ` refers to the symmetric law, i.e.
//! `2 ∫_0^r u^j λ(du)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, PgnError, Result};
use crate::levy::{gamma_levy_cumulant, LevyMeasure1D};
use crate::special::ln_gamma;

/// Fitted parameters of the approximant `T_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedParams {
    pub p: f64,
    pub s: f64,
    pub m: f64,
    pub sigma: f64,
    pub r: f64,
    /// Cumulants agree for `2 <= j < q`.
    pub q: u32,
    pub symmetric: bool,
    /// Cumulants of `X_r` used in the fit, `kappa[k] = κ_{k+2}`, through order `q`.
    pub kappa: Vec<f64>,
    /// Worst relative mismatch over the matched orders.
    pub residual: f64,
}

impl MatchedParams {
    pub fn kappa_x(&self, j: u32) -> f64 {
        self.kappa[(j - 2) as usize]
    }

    /// `κ_j` of the Gamma-type part `Y_r` (doubled for symmetric fits,
    /// zero for odd orders there).
    pub fn kappa_y(&self, j: u32) -> f64 {
        if self.symmetric && j % 2 == 1 {
            return 0.0;
        }
        let one_sided = gamma_levy_cumulant(self.p, self.s, self.m, j).unwrap_or(f64::NAN);
        if self.symmetric {
            2.0 * one_sided
        } else {
            one_sided
        }
    }

    /// `κ_j` of `T_r = Y_r + σZ`.
    pub fn kappa_t(&self, j: u32) -> f64 {
        let gauss = if j == 2 { self.sigma * self.sigma } else { 0.0 };
        gauss + self.kappa_y(j)
    }

    /// Poisson rate `Γ(p+1) m s^{p+1}` of the one-sided Gamma part.
    pub fn jump_rate(&self) -> f64 {
        if self.p <= -1.0 || self.m == 0.0 {
            return if self.m == 0.0 { 0.0 } else { f64::INFINITY };
        }
        (ln_gamma(self.p + 1.0) + self.m.ln() + (self.p + 1.0) * self.s.ln()).exp()
    }

    /// Mean `Γ(p+2) m s^{p+2}` of the one-sided Gamma part.
    pub fn jump_mean(&self) -> f64 {
        if self.m == 0.0 {
            return 0.0;
        }
        (ln_gamma(self.p + 2.0) + self.m.ln() + (self.p + 2.0) * self.s.ln()).exp()
    }

    fn matched_orders(&self) -> impl Iterator<Item = u32> + '_ {
        (2..self.q).filter(move |j| !self.symmetric || j % 2 == 0)
    }

    fn compute_residual(&self) -> f64 {
        self.matched_orders()
            .map(|j| {
                let x = self.kappa_x(j);
                (x - self.kappa_t(j)).abs() / x.abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Which fit to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchOrder {
    Four,
    Five,
    Seven,
    Nine,
    Auto,
}

impl std::str::FromStr for MatchOrder {
    type Err = PgnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" => Ok(MatchOrder::Four),
            "5" => Ok(MatchOrder::Five),
            "7" => Ok(MatchOrder::Seven),
            "9" => Ok(MatchOrder::Nine),
            "auto" => Ok(MatchOrder::Auto),
            other => Err(PgnError::Schema(format!("unknown order '{other}', expected 4|5|7|9|auto"))),
        }
    }
}

fn cumulants(measure: &LevyMeasure1D, r: f64, j_max: u32, symmetric: bool) -> Result<Vec<f64>> {
    if !measure.has_infinite_mass() {
        return domain("measure has finite mass; use exact compound Poisson sampling instead");
    }
    if !(r > 0.0) {
        return domain(format!("truncation radius must be > 0, got {r}"));
    }
    let factor = if symmetric { 2.0 } else { 1.0 };
    let ks = (2..=j_max)
        .map(|j| measure.partial_cumulant(j, r).map(|k| factor * k))
        .collect::<Result<Vec<_>>>()?;
    if let Some((i, k)) = ks.iter().enumerate().find(|(_, k)| !(**k > 0.0 && k.is_finite())) {
        return domain(format!("κ_{} = {k} is not positive and finite", i + 2));
    }
    Ok(ks)
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= -1.0 && p.is_finite()) {
        return domain(format!("p must be finite and >= -1, got {p}"));
    }
    Ok(())
}

fn fit_asym(kappa: Vec<f64>, r: f64, p: f64, q: u32) -> Result<MatchedParams> {
    let (k2, k3, k4) = (kappa[0], kappa[1], kappa[2]);
    let lhs = (p + 4.0) / (p + 3.0);
    let rhs = k2 * k4 / (k3 * k3);
    if !(lhs < rhs) {
        return Err(PgnError::MatchInfeasible(format!(
            "(p+4)/(p+3) = {lhs} must be < κ2κ4/κ3² = {rhs} at p = {p}"
        )));
    }
    let s = k4 / ((p + 4.0) * k3);
    let m = (k3.ln() - ln_gamma(p + 4.0) - (p + 4.0) * s.ln()).exp();
    let k2y = (p + 4.0) * k3 * k3 / ((p + 3.0) * k4);
    let sigma2 = k2 - k2y;
    if !(sigma2 > 0.0) {
        return Err(PgnError::MatchInfeasible(format!("σ² = {sigma2} is not positive")));
    }
    let mut out = MatchedParams {
        p,
        s,
        m,
        sigma: sigma2.sqrt(),
        r,
        q,
        symmetric: false,
        kappa,
        residual: 0.0,
    };
    out.residual = out.compute_residual();
    Ok(out)
}

fn fit_sym(kappa: Vec<f64>, r: f64, p: f64, q: u32) -> Result<MatchedParams> {
    let (k2, k4, k6) = (kappa[0], kappa[2], kappa[4]);
    let lhs = (p + 5.0) * (p + 6.0) / ((p + 3.0) * (p + 4.0));
    let rhs = k2 * k6 / (k4 * k4);
    if !(lhs < rhs) {
        return Err(PgnError::MatchInfeasible(format!(
            "(p+5)(p+6)/((p+3)(p+4)) = {lhs} must be < κ2κ6/κ4² = {rhs} at p = {p}"
        )));
    }
    let s = (k6 / ((p + 5.0) * (p + 6.0) * k4)).sqrt();
    let m = (k4.ln() - 2f64.ln() - ln_gamma(p + 5.0) - (p + 5.0) * s.ln()).exp();
    // κ_{2,Y} = 2Γ(p+3) m s^{p+3} = κ4 / ((p+3)(p+4) s²)
    let k2y = k4 / ((p + 3.0) * (p + 4.0) * s * s);
    let sigma2 = k2 - k2y;
    if !(sigma2 > 0.0) {
        return Err(PgnError::MatchInfeasible(format!("σ² = {sigma2} is not positive")));
    }
    let mut out = MatchedParams {
        p,
        s,
        m,
        sigma: sigma2.sqrt(),
        r,
        q,
        symmetric: true,
        kappa,
        residual: 0.0,
    };
    out.residual = out.compute_residual();
    Ok(out)
}

/// Fourth-order matching at a caller-chosen `p >= -1`.
pub fn match4(measure: &LevyMeasure1D, r: f64, p: f64) -> Result<MatchedParams> {
    check_p(p)?;
    let kappa = cumulants(measure, r, 5, false)?;
    fit_asym(kappa, r, p, 5)
}

/// Fifth-order matching; `p` solves `1 + 1/(p+4) = κ3 κ5 / κ4²`.
pub fn match5(measure: &LevyMeasure1D, r: f64) -> Result<MatchedParams> {
    fit5(cumulants(measure, r, 6, false)?, r)
}

fn fit5(kappa: Vec<f64>, r: f64) -> Result<MatchedParams> {
    let rho = kappa[1] * kappa[3] / (kappa[2] * kappa[2]);
    if !(rho > 1.0 && rho < 4.0 / 3.0) {
        return Err(PgnError::MatchInfeasible(format!(
            "κ3κ5/κ4² = {rho} outside (1, 4/3): no p > -1"
        )));
    }
    let p = 1.0 / (rho - 1.0) - 4.0;
    fit_asym(kappa, r, p, 6)
}

/// Symmetric seventh-order matching at a caller-chosen `p >= -1`.
pub fn match_sym7(measure: &LevyMeasure1D, r: f64, p: f64) -> Result<MatchedParams> {
    check_p(p)?;
    let kappa = cumulants(measure, r, 8, true)?;
    fit_sym(kappa, r, p, 8)
}

/// Symmetric ninth-order matching; `p` solves
/// `(p+7)(p+8)/((p+5)(p+6)) = κ4 κ8 / κ6²`.
pub fn match_sym9(measure: &LevyMeasure1D, r: f64) -> Result<MatchedParams> {
    let kappa = cumulants(measure, r, 10, true)?;
    let ratio = kappa[2] * kappa[6] / (kappa[4] * kappa[4]);
    let p = solve_sym_p(ratio)?;
    fit_sym(kappa, r, p, 10)
}

/// `g(p) = (p+7)(p+8)/((p+5)(p+6))`, strictly decreasing on `(-1, ∞)`.
pub fn sym_g(p: f64) -> f64 {
    (p + 7.0) * (p + 8.0) / ((p + 5.0) * (p + 6.0))
}

/// Unique `p > 0` with `g(p) = ratio`.
pub fn solve_sym_p(ratio: f64) -> Result<f64> {
    let g0 = sym_g(0.0);
    if !(ratio > 1.0 && ratio < g0) {
        return Err(PgnError::MatchInfeasible(format!(
            "κ4κ8/κ6² = {ratio} outside (1, {g0}): no p > 0"
        )));
    }
    // (1-h) p² + (15-11h) p + (56-30h) = 0 with 1-h < 0
    let a = 1.0 - ratio;
    let b = 15.0 - 11.0 * ratio;
    let c = 56.0 - 30.0 * ratio;
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) {
        return Err(PgnError::RootBracket(format!("negative discriminant {disc}")));
    }
    let sq = disc.sqrt();
    // cancellation-free pair of roots
    let t = -0.5 * (b + b.signum() * sq);
    let roots = [t / a, if t != 0.0 { c / t } else { f64::NAN }];
    let mut p = roots
        .into_iter()
        .filter(|x| x.is_finite() && *x > 0.0)
        .fold(f64::NAN, |acc: f64, x| if acc.is_nan() { x } else { acc.max(x) });
    if !p.is_finite() {
        return Err(PgnError::RootBracket(format!("no positive root for ratio {ratio}")));
    }
    // one Newton polish on g(p) - ratio
    let dg = |p: f64| {
        let (n, d) = ((p + 7.0) * (p + 8.0), (p + 5.0) * (p + 6.0));
        ((2.0 * p + 15.0) * d - (2.0 * p + 11.0) * n) / (d * d)
    };
    let step = (sym_g(p) - ratio) / dg(p);
    if step.is_finite() && step.abs() < 1e-6 * p.max(1.0) {
        p -= step;
    }
    Ok(p)
}

fn check_index(a: f64) -> Result<()> {
    if !(a > 0.0 && a < 2.0) {
        return domain(format!("stability index must lie in (0, 2), got {a}"));
    }
    Ok(())
}

/// `a² - 8a + 11`, the fifth-order `p` for truncated stable measures.
pub fn stable_p_asym(a: f64) -> Result<f64> {
    check_index(a)?;
    Ok(a * a - 8.0 * a + 11.0)
}

/// The ninth-order symmetric `p` for truncated stable measures: the unique
/// positive root of `g(p) = (6-a)²/((4-a)(8-a))`.
pub fn stable_p_sym(a: f64) -> Result<f64> {
    check_index(a)?;
    solve_sym_p((6.0 - a).powi(2) / ((4.0 - a) * (8.0 - a)))
}

/// Default fit: closed-form `p` for truncated stable measures, otherwise
/// the highest-order solved fit.
pub fn fit_default(measure: &LevyMeasure1D, r: f64, symmetric: bool) -> Result<MatchedParams> {
    match (measure, symmetric) {
        (LevyMeasure1D::TruncStable { a, .. }, false) => match4(measure, r, stable_p_asym(*a)?)
            .map(|mut m| {
                m.q = 6;
                m.kappa = cumulants(measure, r, 6, false).unwrap_or(m.kappa);
                m.residual = m.compute_residual();
                m
            }),
        (LevyMeasure1D::TruncStable { a, .. }, true) => match_sym7(measure, r, stable_p_sym(*a)?)
            .map(|mut m| {
                m.q = 10;
                m.kappa = cumulants(measure, r, 10, true).unwrap_or(m.kappa);
                m.residual = m.compute_residual();
                m
            }),
        (_, false) => match5(measure, r),
        (_, true) => match_sym9(measure, r),
    }
}

/// `p` one unit above the feasibility boundary of the fourth-order
/// (or symmetric seventh-order) inequality.
pub fn fallback_p(measure: &LevyMeasure1D, r: f64, symmetric: bool) -> Result<f64> {
    let kappa = cumulants(measure, r, 6, symmetric)?;
    if symmetric {
        let ratio = kappa[0] * kappa[4] / (kappa[2] * kappa[2]);
        // (p+5)(p+6) = R (p+3)(p+4)  ⇔  (1-R)p² + (11-7R)p + (30-12R) = 0
        let (a, b, c) = (1.0 - ratio, 11.0 - 7.0 * ratio, 30.0 - 12.0 * ratio);
        let disc = b * b - 4.0 * a * c;
        let boundary = if disc >= 0.0 && a != 0.0 {
            let sq = disc.sqrt();
            ((-b - sq) / (2.0 * a)).max((-b + sq) / (2.0 * a))
        } else {
            -1.0
        };
        Ok((boundary + 1.0).max(-1.0))
    } else {
        let ratio = kappa[0] * kappa[2] / (kappa[1] * kappa[1]);
        Ok((1.0 / (ratio - 1.0) - 3.0 + 1.0).max(-1.0))
    }
}

/// Outcome of [`fit_with_order`]: the fit plus any fallback notes.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: MatchedParams,
    pub warnings: Vec<String>,
}

/// Run the requested fit. `Auto` tries the solved high-order fit and then
/// the caller-`p` fit; explicit orders never fall back unless
/// `fallback` is set, in which case a failed 5/9 retries as 4/7 at
/// [`fallback_p`].
pub fn fit_with_order(
    measure: &LevyMeasure1D,
    r: f64,
    symmetric: bool,
    order: MatchOrder,
    p: Option<f64>,
    fallback: bool,
) -> Result<FitOutcome> {
    let mut warnings = Vec::new();
    let explicit_p = |default: Result<f64>| p.map(Ok).unwrap_or(default);
    let params = match order {
        MatchOrder::Four => match4(measure, r, explicit_p(fallback_p(measure, r, false))?)?,
        MatchOrder::Seven => match_sym7(measure, r, explicit_p(fallback_p(measure, r, true))?)?,
        MatchOrder::Five | MatchOrder::Nine | MatchOrder::Auto => {
            let high = match (order, symmetric) {
                (MatchOrder::Five, _) | (MatchOrder::Auto, false) => match5(measure, r),
                _ => match_sym9(measure, r),
            };
            let sym = matches!(order, MatchOrder::Nine) || (order == MatchOrder::Auto && symmetric);
            match high {
                Ok(m) => m,
                Err(e @ PgnError::MatchInfeasible(_)) if fallback || order == MatchOrder::Auto => {
                    let p = explicit_p(fallback_p(measure, r, sym))?;
                    warnings.push(format!("{e}; falling back to {} at p = {p}", if sym { "order 7" } else { "order 4" }));
                    if sym {
                        match_sym7(measure, r, p)?
                    } else {
                        match4(measure, r, p)?
                    }
                }
                Err(e) => return Err(e),
            }
        }
    };
    Ok(FitOutcome { params, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ts111() -> LevyMeasure1D {
        LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0)
    }

    #[test]
    fn match4_worked_example() {
        let m = match4(&ts111(), 1.0, 4.0).unwrap();
        assert_relative_eq!(m.s, 1.0 / 12.0, max_relative = 1e-14);
        assert_relative_eq!(m.m, 12f64.powi(8) / 10080.0, max_relative = 1e-12);
        assert_relative_eq!(m.sigma * m.sigma, 1.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(m.kappa_y(2), 6.0 / 7.0, max_relative = 1e-12);
        assert_eq!(m.q, 5);
        assert!(m.residual < 1e-12);
        // feasibility 8/7 < 4/3
        assert!(8.0 / 7.0 < m.kappa_x(2) * m.kappa_x(4) / m.kappa_x(3).powi(2));
    }

    #[test]
    fn match5_recovers_stable_p() {
        let m = match5(&ts111(), 1.0).unwrap();
        assert_relative_eq!(m.p, 4.0, max_relative = 1e-12);
        assert_eq!(m.q, 6);
        for a in [0.3, 0.5, 1.0, 1.5, 1.9] {
            let meas = LevyMeasure1D::trunc_stable(2.5, a, 1.0);
            let m = match5(&meas, 0.3).unwrap();
            assert_relative_eq!(m.p, a * a - 8.0 * a + 11.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn match5_infeasible_ratio() {
        // κ3κ5/κ4² = 1.5 >= 4/3 forces p <= -1
        let kappa = vec![1.0, 1.0, 1.0, 1.5, 3.0];
        assert!(matches!(fit5(kappa, 1.0), Err(PgnError::MatchInfeasible(_))));
        assert!(matches!(
            fit_asym(vec![1.0, 1.0, 1.0, 1.0], 1.0, 0.0, 5),
            Err(PgnError::MatchInfeasible(_))
        ));
    }

    #[test]
    fn large_p_always_feasible() {
        for p in [50.0, 200.0, 1e4] {
            assert!(match4(&ts111(), 0.5, p).is_ok());
            assert!(match_sym7(&ts111(), 0.5, p).is_ok());
        }
    }

    #[test]
    fn p_minus_one_boundary_accepted() {
        let meas = LevyMeasure1D::trunc_stable(1.0, 0.2, 1.0);
        let m = match4(&meas, 1.0, -1.0);
        // the inequality at p = -1 is 3/2 < κ2κ4/κ3²
        let k = |j| meas.partial_cumulant(j, 1.0).unwrap();
        assert_eq!(m.is_ok(), 1.5 < k(2) * k(4) / (k(3) * k(3)));
        assert!(match4(&meas, 1.0, -1.5).is_err());
    }

    #[test]
    fn sym9_at_a_one() {
        let expected = (10.0 + 526f64.sqrt()) / 2.0;
        let m = match_sym9(&ts111(), 1.0).unwrap();
        assert_relative_eq!(m.p, expected, max_relative = 1e-12);
        assert_eq!(m.q, 10);
        assert!(m.residual < 1e-12, "{}", m.residual);
        assert!((sym_g(m.p) - 25.0 / 21.0).abs() < 1e-12);
        assert_eq!(m.kappa_t(3), 0.0);
        assert_eq!(m.kappa_t(5), 0.0);
        assert_eq!(m.kappa_t(7), 0.0);
    }

    #[test]
    fn sym7_scale_example() {
        let p = (10.0 + 526f64.sqrt()) / 2.0;
        let m = match_sym7(&ts111(), 1.0, p).unwrap();
        let s = ((1.0 / 5.0) / ((p + 5.0) * (p + 6.0) / 3.0)).sqrt();
        assert_relative_eq!(m.s, s, max_relative = 1e-12);
        assert_relative_eq!(m.s, 0.035_265, max_relative = 5e-4);
    }

    #[test]
    fn stable_p_values() {
        assert_eq!(stable_p_asym(1.0).unwrap(), 4.0);
        assert_relative_eq!(stable_p_asym(1.5).unwrap(), 1.25);
        assert_relative_eq!(stable_p_asym(1e-9).unwrap(), 11.0, epsilon = 1e-7);
        assert!(stable_p_asym(2.0).is_err());
        assert_relative_eq!(stable_p_sym(1.0).unwrap(), (10.0 + 526f64.sqrt()) / 2.0, max_relative = 1e-13);
        assert_relative_eq!(stable_p_sym(1e-9).unwrap(), (21.0 + 1153f64.sqrt()) / 2.0, max_relative = 1e-7);
        assert!(stable_p_sym(0.5).unwrap() > stable_p_sym(1.5).unwrap());
        assert!(stable_p_sym(0.0).is_err());
    }

    #[test]
    fn finite_mass_rejected() {
        let flat = LevyMeasure1D::Custom {
            density: crate::levy::CustomDensity::Flat { c: 1.0 },
            upper_support: 1.0,
            singularity_exponent_hint: -1.0,
        };
        assert!(matches!(match5(&flat, 0.5), Err(PgnError::Domain(_))));
    }

    #[test]
    fn auto_falls_back_when_high_order_fails() {
        let out = fit_with_order(&ts111(), 1.0, true, MatchOrder::Auto, None, false).unwrap();
        assert_eq!(out.params.q, 10);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn order_parsing() {
        assert_eq!("auto".parse::<MatchOrder>().unwrap(), MatchOrder::Auto);
        assert!("6".parse::<MatchOrder>().is_err());
    }
}
