//! Total-variation error bounds for the approximation.
//!
//! Univariate: with `L(t, r) = (t²/2) min{C1² κ2(1/|t|), σ²}` and
//!
//! ```text
//! Q_j(r)² = Γ(j+½) / (2 (C1² C2)^{j+½}) + κ2(r)^{j+½} ∫_{1/r}^∞ t^{2j} e^{-2L(t,r)} dt,
//! ```
//!
//! `d_TV(X, Δ_r + T_r) <= (|κ|_{q,X_r} + |κ|_{q,Y_r}) / (q! κ2^{q/2}) · (q Q_{q-1} + Q_q + Q_{q+1})`.
//!
//! The multivariate quantities are diagnostics only: the constants that
//! multiply them are not known in closed form.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{PgnError, Result};
use crate::levy::{gamma_levy_cumulant, LevyMeasure1D};
use crate::matching::MatchedParams;
use crate::quad::{integrate, QuadConfig};
use crate::radial::RadialField;
use crate::sphere::min_eigenvalue;
use crate::special::{factorial, gamma_p, ln_gamma};

const PANEL_WIDTH: f64 = std::f64::consts::LN_2;
const PANEL_BUDGET: usize = 10_000;
const PANEL_STOP: f64 = 1e-16;
const REPORT_REL_ERR: f64 = 1e-6;
const RHO_NODES: usize = 128;
const RHO_DECADES: f64 = 8.0;

/// `C1 = sin 1`.
pub fn const_c1() -> f64 {
    1f64.sin()
}

/// `C2 = inf_{p>0} P(p, p)`, fixed at its `p → ∞` limit `1/2`.
pub fn const_c2() -> f64 {
    0.5
}

/// `P(p, p)` on a log grid of `n` points over `[lo, hi]`.
pub fn c2_profile(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            let p = (llo + (lhi - llo) * i as f64 / (n - 1).max(1) as f64).exp();
            (p, gamma_p(p, p))
        })
        .collect()
}

/// `∫_{t0}^∞ e^{g(t)} dt` for a unimodal log-integrand `g`, by
/// quadrature on panels of constant width in `v = ln t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailIntegral {
    pub value: f64,
    pub abs_err: f64,
    pub panels: usize,
    /// Right end of the last panel.
    pub truncated_at: f64,
    pub converged: bool,
}

pub fn tail_integral<G: Fn(f64) -> f64>(log_f: G, t0: f64) -> Result<TailIntegral> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(PgnError::Domain(format!("tail integral start {t0} must be finite and > 0")));
    }
    let cfg = QuadConfig::default();
    let mut total = 0.0;
    let mut err = 0.0;
    let mut small_run = 0;
    let mut v = t0.ln();
    for panel in 1..=PANEL_BUDGET {
        let res = integrate(|v: f64| (log_f(v.exp()) + v).exp(), v, v + PANEL_WIDTH, cfg)?;
        total += res.value;
        err += res.abs_err;
        let decreasing = log_f((v + PANEL_WIDTH).exp()) <= log_f(v.exp());
        v += PANEL_WIDTH;
        let small = res.value <= PANEL_STOP * total || (total == 0.0 && res.value == 0.0);
        small_run = if small && decreasing { small_run + 1 } else { 0 };
        if small_run >= 2 {
            return Ok(TailIntegral {
                value: total,
                abs_err: err,
                panels: panel,
                truncated_at: v.exp(),
                converged: true,
            });
        }
    }
    Ok(TailIntegral {
        value: total,
        abs_err: err,
        panels: PANEL_BUDGET,
        truncated_at: v.exp(),
        converged: false,
    })
}

fn kappa2_at(measure: &LevyMeasure1D, r: f64, symmetric: bool) -> Result<f64> {
    let k = measure.partial_cumulant(2, r.min(measure.upper_support()))?;
    Ok(if symmetric { 2.0 * k } else { k })
}

/// `L(t, r) = (t²/2) min{C1² κ2(1/|t|), σ²}`; `κ2` is doubled for
/// symmetric laws.
#[allow(non_snake_case)]
pub fn L_func(t: f64, measure: &LevyMeasure1D, sigma: f64, symmetric: bool) -> Result<f64> {
    if t == 0.0 || sigma == 0.0 {
        return Ok(0.0);
    }
    let c1 = const_c1();
    let k2 = kappa2_at(measure, 1.0 / t.abs(), symmetric)?;
    Ok(0.5 * t * t * (c1 * c1 * k2).min(sigma * sigma))
}

/// `Γ(j+½) / (2 (C1² C2)^{j+½})`, the `r → 0` limit of `Q_j²`.
pub fn q_floor_sq(j: u32) -> f64 {
    let c = const_c1().powi(2) * const_c2();
    let e = j as f64 + 0.5;
    (ln_gamma(e) - (2f64).ln() - e * c.ln()).exp()
}

/// `Q_j(r)` with its tail-integral diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QValue {
    pub j: u32,
    pub value: f64,
    pub floor_sq: f64,
    /// Quadrature error carried into `Q_j²`.
    pub abs_err_sq: f64,
    pub tail: TailIntegral,
    /// `false` when the tail panels did not decay within budget (value is +∞).
    pub finite: bool,
}

/// `Q_j(r)` for the fit `params` of `measure`.
#[allow(non_snake_case)]
pub fn Qj(measure: &LevyMeasure1D, params: &MatchedParams, j: u32) -> Result<QValue> {
    if j < 1 {
        return Err(PgnError::Domain("Q_j is defined for j >= 1".into()));
    }
    let r = params.r;
    let sym = params.symmetric;
    let k2r = kappa2_at(measure, r, sym)?;
    let sigma = params.sigma;
    let jf = j as f64;
    let log_f = |t: f64| -> f64 {
        let l = L_func(t, measure, sigma, sym).unwrap_or(f64::NAN);
        2.0 * jf * t.ln() - 2.0 * l
    };
    let tail = tail_integral(log_f, 1.0 / r)?;
    let floor_sq = q_floor_sq(j);
    let weight = (k2r.ln() * (jf + 0.5)).exp();
    let second = weight * tail.value;
    let finite = tail.converged;
    Ok(QValue {
        j,
        value: if finite { (floor_sq + second).sqrt() } else { f64::INFINITY },
        floor_sq,
        abs_err_sq: weight * tail.abs_err,
        tail,
        finite,
    })
}

/// Evaluated univariate bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub q: u32,
    pub r: f64,
    pub symmetric: bool,
    #[serde(rename = "Qs")]
    pub qs: BTreeMap<u32, f64>,
    pub abs_cum_x: f64,
    pub abs_cum_y: f64,
    pub kappa2: f64,
    pub dtv_bound: f64,
    /// `false` for families whose exponential condition is not established.
    pub certified: bool,
    pub diagnostics: Vec<QValue>,
}

/// Assemble the total-variation bound for a fit.
pub fn dtv_bound_1d(measure: &LevyMeasure1D, params: &MatchedParams) -> Result<BoundReport> {
    let q = params.q;
    let mut failed = Vec::new();
    if q < 5 {
        failed.push(format!("q = {q} < 5"));
    }
    if !(params.s < params.r / (params.p + 3.0)) {
        failed.push(format!(
            "s = {} >= r/(p+3) = {}",
            params.s,
            params.r / (params.p + 3.0)
        ));
    }
    if !(params.sigma > 0.0) {
        failed.push(format!("σ = {} is not > 0", params.sigma));
    }
    if !failed.is_empty() {
        return Err(PgnError::HypothesisViolated(failed.join("; ")));
    }
    let factor = if params.symmetric { 2.0 } else { 1.0 };
    let abs_cum_x = factor * measure.partial_cumulant(q, params.r)?;
    let abs_cum_y = factor * gamma_levy_cumulant(params.p, params.s, params.m, q)?;
    let kappa2 = kappa2_at(measure, params.r, params.symmetric)?;
    let mut qs = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for j in [q - 1, q, q + 1] {
        let qv = Qj(measure, params, j)?;
        if qv.finite && qv.abs_err_sq > REPORT_REL_ERR * qv.value * qv.value {
            return Err(PgnError::NonIntegrable(format!(
                "Q_{j}² quadrature error {:e} exceeds {REPORT_REL_ERR:e} relative",
                qv.abs_err_sq
            )));
        }
        qs.insert(j, qv.value);
        diagnostics.push(qv);
    }
    let qf = q as f64;
    let prefactor = (abs_cum_x + abs_cum_y) / (factorial(q) * kappa2.powf(qf / 2.0));
    let dtv_bound = prefactor * (qf * qs[&(q - 1)] + qs[&q] + qs[&(q + 1)]);
    Ok(BoundReport {
        q,
        r: params.r,
        symmetric: params.symmetric,
        qs,
        abs_cum_x,
        abs_cum_y,
        kappa2,
        dtv_bound,
        certified: !matches!(measure, LevyMeasure1D::LogSingular { .. }),
        diagnostics,
    })
}

/// `A(a) = (a² - 8a + 17) / ((4-a)(5-a)²)`.
pub fn stable_bound_a(a: f64) -> f64 {
    (a * a - 8.0 * a + 17.0) / ((4.0 - a) * (5.0 - a).powi(2))
}

/// The truncated-stable closed form of the `q = 6` bound,
/// `((2-a)³/c²)[1/(6-a) + A(a)] (6Q5 + Q6 + Q7)/720 · r^{2a}`.
pub fn stable_bound_closed_form(a: f64, c: f64, r: f64, q5: f64, q6: f64, q7: f64) -> f64 {
    (2.0 - a).powi(3) / (c * c)
        * (1.0 / (6.0 - a) + stable_bound_a(a))
        * (6.0 * q5 + q6 + q7)
        / 720.0
        * r.powf(2.0 * a)
}

// ---------------------------------------------------------------------------
// multivariate diagnostics

/// `h(d) = ⌊d/2⌋ + 1`.
pub fn h_of_d(d: usize) -> usize {
    d / 2 + 1
}

fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| PgnError::RankDeficient("A_τ is singular".into()))
}

/// `ρ_τ(z)`: the smaller of the least eigenvalues of
/// `C1² A⁻¹ M_τ(z) A⁻¹` and `τ² A⁻¹ K_ν A⁻¹`, where
/// `M_τ(z) = ∫u²θθ' 1{u < r_τ(θ) ∧ z/‖A⁻¹θ‖} λ(du|θ) ν(dθ)`.
pub fn rho_tau(z: f64, field: &RadialField, a: &DMatrix<f64>) -> Result<f64> {
    let a_inv = inverse(a)?;
    Ok(RhoEval::new(field, &a_inv).eval(z))
}

struct RhoEval<'a> {
    field: &'a RadialField,
    a_inv: DMatrix<f64>,
    norms: Vec<f64>,
    gauss_floor: f64,
}

impl<'a> RhoEval<'a> {
    fn new(field: &'a RadialField, a_inv: &DMatrix<f64>) -> Self {
        let norms = field
            .nodes()
            .iter()
            .map(|n| {
                let v = a_inv * nalgebra::DVector::from_column_slice(&n.theta);
                v.norm()
            })
            .collect();
        let kbar = a_inv * &field.k * a_inv * (field.tau * field.tau);
        RhoEval {
            field,
            a_inv: a_inv.clone(),
            norms,
            gauss_floor: min_eigenvalue(&kbar),
        }
    }

    fn m_of_z(&self, z: f64) -> DMatrix<f64> {
        let d = self.field.dim();
        let mut m = DMatrix::zeros(d, d);
        for ((node, p), g) in self.field.grid().zip(&self.norms) {
            let cut = p.r.min(z / g);
            let w = node.weight * p.c * cut.powf(2.0 - p.a) / (2.0 - p.a);
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] += w * node.theta[i] * node.theta[j];
                }
            }
        }
        m
    }

    fn eval(&self, z: f64) -> f64 {
        let c1 = const_c1();
        let scaled = &self.a_inv * self.m_of_z(z) * &self.a_inv * (c1 * c1);
        min_eigenvalue(&scaled).min(self.gauss_floor)
    }

    /// `R = ess sup ‖A⁻¹θ‖ r_τ(θ)`; `M_τ(z) = Σ_τ` for `z >= R`.
    fn saturation(&self) -> f64 {
        self.field
            .node_params()
            .iter()
            .zip(&self.norms)
            .map(|(p, g)| p.r * g)
            .fold(0.0, f64::max)
    }
}

/// `∫‖uA⁻¹θ‖₁^q λ_τ(du,dθ) + ∫‖uA⁻¹θ‖₁^q γ_τ(du,dθ)`.
pub fn mv_moment_factor(field: &RadialField, a: &DMatrix<f64>, q: u32) -> Result<f64> {
    if q < 5 {
        return Err(PgnError::HypothesisViolated(format!("q = {q} < 5")));
    }
    let a_inv = inverse(a)?;
    let qf = q as f64;
    let mut total = 0.0;
    for (node, p) in field.grid() {
        let v = &a_inv * nalgebra::DVector::from_column_slice(&node.theta);
        let l1 = v.iter().map(|x| x.abs()).sum::<f64>();
        total += node.weight * l1.powf(qf) * (p.small_jump_moment(qf) + p.gamma_moment(qf));
    }
    Ok(total)
}

/// `∫u^q (λ_τ + γ_τ)(du, dθ)` without the direction weights.
pub fn mv_radial_moment(field: &RadialField, q: u32) -> f64 {
    let qf = q as f64;
    field
        .grid()
        .map(|(node, p)| node.weight * (p.small_jump_moment(qf) + p.gamma_moment(qf)))
        .sum()
}

/// Monotone piecewise-cubic (Fritsch–Carlson) interpolant.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Pchip {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        d[0] = delta[0];
        d[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Pchip { x, y, d }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (h00, h10) = (2.0 * s * s * s - 3.0 * s * s + 1.0, s * s * s - 2.0 * s * s + s);
        let (h01, h11) = (-2.0 * s * s * s + 3.0 * s * s, s * s * s - s * s);
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

/// Multivariate bound ingredients, modulo the unknown constant `c(d, q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MvBoundReport {
    pub label: &'static str,
    pub tau: f64,
    pub q: u32,
    pub d: usize,
    pub h: usize,
    pub moment_factor: f64,
    /// `(z, ρ_τ(z))` at the interpolation nodes.
    pub rho_samples: Vec<(f64, f64)>,
    /// `R = ess sup ‖A⁻¹θ‖ r_τ(θ)`.
    pub r_sat: f64,
    /// `∫_0^∞ s^{2q+2h(d)+d-1} e^{-ρ_τ(1/s)s²} ds`.
    pub integral_diag: f64,
    /// The same integrand over `[1/R, ∞)`.
    pub tail_integral: f64,
    /// `√(1 + tail_integral)`.
    pub radical: f64,
    pub bound_modulo_constant: f64,
    pub finite: bool,
}

/// Evaluate the exponential-integrability integral and the bound shape.
pub fn mv_integral_diag(field: &RadialField, a: &DMatrix<f64>, q: u32) -> Result<MvBoundReport> {
    let a_inv = inverse(a)?;
    let rho = RhoEval::new(field, &a_inv);
    let d = field.dim();
    let h = h_of_d(d);
    let n = (2 * q as usize + 2 * h + d - 1) as f64;
    let r_sat = rho.saturation();
    let rho_sat = rho.eval(r_sat);

    // nodes in ln z over [ln R - decades, ln R], values in ln ρ
    let lz_hi = r_sat.ln();
    let lz_lo = lz_hi - RHO_DECADES * std::f64::consts::LN_10;
    let lz: Vec<f64> = (0..RHO_NODES)
        .map(|i| lz_lo + (lz_hi - lz_lo) * i as f64 / (RHO_NODES - 1) as f64)
        .collect();
    let samples: Vec<(f64, f64)> = lz.iter().map(|&l| (l.exp(), rho.eval(l.exp()))).collect();
    let interp = Pchip::new(lz.clone(), samples.iter().map(|s| s.1.ln()).collect());
    let rho_at = |z: f64| -> f64 {
        if z >= r_sat {
            rho_sat
        } else if z.ln() >= lz_lo {
            interp.eval(z.ln()).exp()
        } else {
            rho.eval(z)
        }
    };

    // ρ is constant on s < 1/R: ∫_0^{1/R} s^n e^{-ρ s²} ds in closed form
    let s_sat = 1.0 / r_sat;
    let k = 0.5 * (n + 1.0);
    let head = 0.5 * (ln_gamma(k) - k * rho_sat.ln()).exp() * gamma_p(k, rho_sat * s_sat * s_sat);
    let tail = tail_integral(|s: f64| n * s.ln() - rho_at(1.0 / s) * s * s, s_sat)?;
    let moment_factor = mv_moment_factor(field, a, q)?;
    let radical = (1.0 + tail.value).sqrt();
    Ok(MvBoundReport {
        label: "diagnostic (modulo c(d,q))",
        tau: field.tau,
        q,
        d,
        h,
        moment_factor,
        rho_samples: samples,
        r_sat,
        integral_diag: head + tail.value,
        tail_integral: tail.value,
        radical,
        bound_modulo_constant: moment_factor / factorial(q) * radical,
        finite: tail.converged,
    })
}
