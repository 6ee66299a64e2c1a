//! One-dimensional Lévy measures on `(0, ∞)` with bounded support.
//!
//! The central quantities are the partial cumulants
//! `κ_j(r) = ∫_0^r u^j λ(du)` of the small-jump part and the tail
//! functionals `∫_{u ≥ r} u^k λ(du)` of the compound-Poisson remainder.
//! Parametric families have closed forms; custom densities go through
//! adaptive quadrature with the origin singularity substituted away.

use serde::{Deserialize, Serialize};

use crate::error::{domain, PgnError, Result};
use crate::quad::{integrate, integrate_origin_power, QuadConfig};
use crate::special::{ln_gamma, pow_segment};

/// Relative slack allowed when a radius is compared against the support.
const SUPPORT_SLACK: f64 = 1e-12;

/// Built-in densities for [`LevyMeasure1D::Custom`].
///
/// Densities are selected by name so that configuration files never carry
/// executable code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CustomDensity {
    /// `c u^{-a-1}`
    PowerLaw { c: f64, a: f64 },
    /// `c u^{-a-1} exp(-u^b)`
    ExpTilted { c: f64, a: f64, b: f64 },
    /// `c u^{-a-1} (1 - u/R)^k` with `R` the upper support.
    PowerBeta { c: f64, a: f64, k: f64 },
    /// `c`, a finite-mass measure (not eligible for matching).
    Flat { c: f64 },
}

/// A Lévy measure on `(0, ∞)` with bounded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LevyMeasure1D {
    /// `c 1{0<u<r0} u^{-a-1}`
    TruncStable { c: f64, a: f64, r0: f64 },
    /// `c 1{0<u<1} u^{-1} ln(1/u)`
    LogSingular { c: f64 },
    /// `c 1{0<u<r0} u^{-a-1} f_n(u^b)` with `f_n(x) = Σ_{i≤n} (-x)^i/i!`
    TiltedStablePoly {
        a: f64,
        b: f64,
        n: u32,
        r0: f64,
        #[serde(default = "one")]
        c: f64,
    },
    Custom {
        density: CustomDensity,
        upper_support: f64,
        singularity_exponent_hint: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Partial cumulants `κ_j(r)` for `j = 2..=j_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantVector {
    pub r: f64,
    pub j_max: u32,
    /// `values[k]` holds `κ_{k+2}(r)`.
    pub values: Vec<f64>,
}

impl CumulantVector {
    pub fn compute(measure: &LevyMeasure1D, r: f64, j_max: u32) -> Result<Self> {
        if j_max < 2 {
            return domain(format!("j_max must be >= 2, got {j_max}"));
        }
        let values = (2..=j_max)
            .map(|j| measure.partial_cumulant(j, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(CumulantVector { r, j_max, values })
    }

    pub fn get(&self, j: u32) -> f64 {
        assert!((2..=self.j_max).contains(&j), "order {j} not stored");
        self.values[(j - 2) as usize]
    }

    /// Check `κ_j² < κ_{j-1} κ_{j+1}` for every interior order present.
    pub fn holder_consistent(&self) -> bool {
        (3..self.j_max).all(|j| {
            let (lo, mid, hi) = (self.get(j - 1), self.get(j), self.get(j + 1));
            mid * mid < lo * hi
        })
    }
}

impl CustomDensity {
    fn eval(&self, u: f64, upper: f64) -> f64 {
        match *self {
            CustomDensity::PowerLaw { c, a } => c * u.powf(-a - 1.0),
            CustomDensity::ExpTilted { c, a, b } => c * u.powf(-a - 1.0) * (-u.powf(b)).exp(),
            CustomDensity::PowerBeta { c, a, k } => {
                c * u.powf(-a - 1.0) * (1.0 - u / upper).max(0.0).powf(k)
            }
            CustomDensity::Flat { c } => c,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CustomDensity::PowerLaw { c, a } => c > 0.0 && a.is_finite(),
            CustomDensity::ExpTilted { c, a, b } => c > 0.0 && a.is_finite() && b > 0.0,
            CustomDensity::PowerBeta { c, a, k } => c > 0.0 && a.is_finite() && k >= 0.0,
            CustomDensity::Flat { c } => c > 0.0,
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid custom density parameters {self:?}"))
        }
    }
}

/// `f_n(x) = Σ_{i=0}^n (-x)^i / i!`
pub fn poly_exp(n: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..=n {
        term *= -x / i as f64;
        sum += term;
    }
    sum
}

/// `e^{-x} - f_n(x)`, summed as the series tail to avoid cancellation.
fn exp_poly_remainder(n: u32, x: f64) -> f64 {
    if x > 8.0 {
        return (-x).exp() - poly_exp(n, x);
    }
    let mut term = 1.0;
    for i in 1..=n + 1 {
        term *= -x / i as f64;
    }
    let mut sum = term;
    let mut i = n + 1;
    loop {
        i += 1;
        term *= -x / i as f64;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() || i > n + 200 {
            break;
        }
    }
    sum
}

impl LevyMeasure1D {
    pub fn trunc_stable(c: f64, a: f64, r0: f64) -> Self {
        LevyMeasure1D::TruncStable { c, a, r0 }
    }

    /// Parameter validation plus the integrability check `∫(u² ∧ 1) λ(du) < ∞`.
    pub fn validate(&self) -> Result<()> {
        match *self {
            LevyMeasure1D::TruncStable { c, a, r0 } => {
                if !(c > 0.0 && a > 0.0 && a < 2.0 && r0 > 0.0 && r0.is_finite()) {
                    return domain(format!("trunc_stable needs c>0, a∈(0,2), r0>0; got c={c}, a={a}, r0={r0}"));
                }
            }
            LevyMeasure1D::LogSingular { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return domain(format!("log_singular needs c>0, got {c}"));
                }
            }
            LevyMeasure1D::TiltedStablePoly { a, b, n, r0, c } => {
                if !(a > 0.0 && a < 2.0 && b > 0.0 && n % 2 == 1 && r0 > 0.0 && c > 0.0) {
                    return domain(format!(
                        "tilted_stable_poly needs a∈(0,2), b>0, odd n, r0>0, c>0; got a={a}, b={b}, n={n}, r0={r0}, c={c}"
                    ));
                }
                // f_n(u^b) must stay positive on (0, r0)
                let first_root = poly_exp_first_root(n).powf(1.0 / b);
                if r0 > first_root * (1.0 + 1e-9) {
                    return domain(format!(
                        "r0={r0} exceeds the positivity radius {first_root} of f_{n}(u^{b})"
                    ));
                }
            }
            LevyMeasure1D::Custom {
                ref density,
                upper_support,
                singularity_exponent_hint,
            } => {
                density.validate()?;
                if !(upper_support > 0.0 && upper_support.is_finite()) {
                    return domain(format!("upper_support must be finite and > 0, got {upper_support}"));
                }
                if singularity_exponent_hint >= 2.0 {
                    return domain(format!(
                        "singularity exponent hint {singularity_exponent_hint} >= 2: ∫u²λ(du) diverges"
                    ));
                }
                let q = self.quadrature_power_integral(2.0, 0.0, upper_support.min(1.0))?;
                if !q.is_finite() {
                    return Err(PgnError::NonIntegrable("∫(u²∧1)λ(du) is not finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn upper_support(&self) -> f64 {
        match *self {
            LevyMeasure1D::TruncStable { r0, .. } => r0,
            LevyMeasure1D::LogSingular { .. } => 1.0,
            LevyMeasure1D::TiltedStablePoly { r0, .. } => r0,
            LevyMeasure1D::Custom { upper_support, .. } => upper_support,
        }
    }

    /// The `α` in `λ(du) ≈ u^{-α-1} du` near the origin.
    pub fn origin_exponent(&self) -> f64 {
        match *self {
            LevyMeasure1D::TruncStable { a, .. } => a,
            LevyMeasure1D::LogSingular { .. } => 0.0,
            LevyMeasure1D::TiltedStablePoly { a, .. } => a,
            LevyMeasure1D::Custom {
                singularity_exponent_hint,
                ..
            } => singularity_exponent_hint,
        }
    }

    /// Whether `λ((0, ∞)) = ∞`, which the approximation requires.
    pub fn has_infinite_mass(&self) -> bool {
        self.origin_exponent() >= 0.0
    }

    /// Lévy density at `u`; zero outside the support.
    pub fn density(&self, u: f64) -> f64 {
        if u <= 0.0 || u >= self.upper_support() {
            return 0.0;
        }
        match *self {
            LevyMeasure1D::TruncStable { c, a, .. } => c * u.powf(-a - 1.0),
            LevyMeasure1D::LogSingular { c } => c * (1.0 / u).ln() / u,
            LevyMeasure1D::TiltedStablePoly { a, b, n, c, .. } => {
                c * u.powf(-a - 1.0) * poly_exp(n, u.powf(b))
            }
            LevyMeasure1D::Custom {
                ref density,
                upper_support,
                ..
            } => density.eval(u, upper_support),
        }
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        let upper = self.upper_support();
        if !(r.is_finite() && r >= 0.0) {
            return domain(format!("radius must be finite and >= 0, got {r}"));
        }
        if r > upper * (1.0 + SUPPORT_SLACK) {
            return domain(format!("radius {r} exceeds upper support {upper}"));
        }
        Ok(())
    }

    /// `∫_lo^hi u^k λ(du)` in closed form where one exists.
    ///
    /// `lo == 0` requires `k > α`. Returns `None` for custom densities.
    fn closed_power_integral(&self, k: f64, lo: f64, hi: f64) -> Option<f64> {
        let hi = hi.min(self.upper_support());
        if hi <= lo {
            return Some(0.0);
        }
        match *self {
            LevyMeasure1D::TruncStable { c, a, .. } => Some(c * pow_segment(k - a, lo, hi)),
            LevyMeasure1D::LogSingular { c } => {
                // antiderivative of u^{k-1} ln(1/u)
                let g = |u: f64| -> f64 {
                    if u == 0.0 {
                        return 0.0;
                    }
                    if k == 0.0 {
                        -0.5 * u.ln() * u.ln()
                    } else {
                        let uk = u.powf(k);
                        -uk * u.ln() / k + uk / (k * k)
                    }
                };
                Some(c * (g(hi) - g(lo)))
            }
            LevyMeasure1D::TiltedStablePoly { a, b, n, c, .. } => {
                let mut sum = 0.0;
                let mut coef = 1.0;
                for i in 0..=n {
                    if i > 0 {
                        coef *= -1.0 / i as f64;
                    }
                    sum += coef * pow_segment(k - a + i as f64 * b, lo, hi);
                }
                Some(c * sum)
            }
            LevyMeasure1D::Custom { .. } => None,
        }
    }

    /// `∫_lo^hi u^k λ(du)` by adaptive quadrature only.
    ///
    /// This never touches a closed form and serves as the independent
    /// oracle for [`LevyMeasure1D::partial_cumulant`].
    pub fn quadrature_power_integral(&self, k: f64, lo: f64, hi: f64) -> Result<f64> {
        let hi = hi.min(self.upper_support());
        if hi <= lo {
            return Ok(0.0);
        }
        let cfg = QuadConfig::default();
        let f = |u: f64| u.powf(k) * self.density(u);
        let res = if lo == 0.0 {
            let beta = k - self.origin_exponent();
            if beta <= 0.0 {
                return Err(PgnError::NonIntegrable(format!(
                    "∫_0 u^{k} λ(du) diverges: origin exponent {} >= {k}",
                    self.origin_exponent()
                )));
            }
            integrate_origin_power(f, hi, beta, cfg)?
        } else {
            // log-spaced substitution keeps steep power laws well resolved
            integrate(
                |t: f64| {
                    let u = t.exp();
                    f(u) * u
                },
                lo.ln(),
                hi.ln(),
                cfg,
            )?
        };
        if !res.converged && res.rel_err() > 1e-8 {
            return Err(PgnError::NonIntegrable(format!(
                "quadrature of u^{k} λ(du) on [{lo}, {hi}] did not converge (rel err {:e})",
                res.rel_err()
            )));
        }
        Ok(res.value)
    }

    fn power_integral(&self, k: f64, lo: f64, hi: f64) -> Result<f64> {
        match self.closed_power_integral(k, lo, hi) {
            Some(v) => Ok(v),
            None => self.quadrature_power_integral(k, lo, hi),
        }
    }

    /// `κ_j(r) = ∫_0^r u^j λ(du)`.
    pub fn partial_cumulant(&self, j: u32, r: f64) -> Result<f64> {
        if j < 2 {
            return domain(format!("cumulant order must be >= 2, got {j}"));
        }
        self.check_radius(r)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        if j as f64 <= self.origin_exponent() {
            return Err(PgnError::NonIntegrable(format!(
                "order {j} does not dominate origin exponent {}",
                self.origin_exponent()
            )));
        }
        self.power_integral(j as f64, 0.0, r)
    }

    /// `∫_{u ≥ r} u^k λ(du)`.
    pub fn tail_moment(&self, k: u32, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return domain(format!("tail radius must be > 0, got {r}"));
        }
        let upper = self.upper_support();
        if r >= upper {
            return Ok(0.0);
        }
        self.power_integral(k as f64, r, upper)
    }

    /// `λ([r, ∞))`.
    pub fn tail_mass(&self, r: f64) -> Result<f64> {
        self.tail_moment(0, r)
    }

    /// `∫_{u ≥ r} u λ(du)`, the centering constant of the large-jump part.
    pub fn tail_mean(&self, r: f64) -> Result<f64> {
        self.tail_moment(1, r)
    }

    /// Full cumulant `κ_j = ∫ u^j λ(du)` of the whole measure.
    pub fn cumulant(&self, j: u32) -> Result<f64> {
        self.partial_cumulant(j, self.upper_support())
    }
}

/// `Γ(j+p+1) m s^{j+p+1}`: the `j`-th cumulant of the Gamma-type Lévy
/// density `m u^p e^{-u/s}`, evaluated in log space.
pub fn gamma_levy_cumulant(p: f64, s: f64, m: f64, j: u32) -> Result<f64> {
    gamma_levy_moment(p, s, m, j as f64)
}

/// `∫_0^∞ u^k m u^p e^{-u/s} du` for real `k` with `k + p + 1 > 0`.
pub fn gamma_levy_moment(p: f64, s: f64, m: f64, k: f64) -> Result<f64> {
    let e = k + p + 1.0;
    if !(e > 0.0) {
        return domain(format!("k+p+1 must be > 0, got {e}"));
    }
    if !(s > 0.0) || m < 0.0 {
        return domain(format!("need s>0, m>=0; got s={s}, m={m}"));
    }
    if m == 0.0 {
        return Ok(0.0);
    }
    Ok((ln_gamma(e) + m.ln() + e * s.ln()).exp())
}

/// Result of splitting `u^{-a-1} e^{-u^b}` into a PGN-eligible polynomial
/// part and a finite-mass remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedDecomposition {
    pub n: u32,
    pub r0: f64,
    pub residual_mass: f64,
}

impl TiltedDecomposition {
    /// The infinite-activity component as a measure.
    pub fn component(&self, a: f64, b: f64) -> LevyMeasure1D {
        LevyMeasure1D::TiltedStablePoly {
            a,
            b,
            n: self.n,
            r0: self.r0,
            c: 1.0,
        }
    }
}

/// Smallest positive root of `f_n` for odd `n`.
pub fn poly_exp_first_root(n: u32) -> f64 {
    assert!(n % 2 == 1, "f_n has a positive root only for odd n");
    // f_n(0) = 1 and f_n(x) → -∞; scan then bisect
    let step = 0.01;
    let mut lo = 0.0;
    let mut hi = step;
    while poly_exp(n, hi) > 0.0 {
        lo = hi;
        hi += step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if poly_exp(n, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Split the tilted stable density `u^{-a-1} exp(-u^b)`.
pub fn tilted_decompose(a: f64, b: f64) -> Result<TiltedDecomposition> {
    if !(a > 0.0 && a < 2.0 && b > 0.0) {
        return domain(format!("need a∈(0,2), b>0; got a={a}, b={b}"));
    }
    // smallest odd integer strictly greater than a/b - 1
    let x = a / b - 1.0;
    let mut n = (x.floor() + 1.0).max(1.0) as u32;
    if n % 2 == 0 {
        n += 1;
    }
    let root = poly_exp_first_root(n);
    let r0 = root.powf(1.0 / b);

    let cfg = QuadConfig::default();
    // near 0 the integrand is O(u^{(n+1)b - a - 1})
    let beta = (n + 1) as f64 * b - a;
    let inner = integrate_origin_power(
        |u| u.powf(-a - 1.0) * exp_poly_remainder(n, u.powf(b)),
        r0,
        beta,
        cfg,
    )?;
    // ∫_{r0}^∞ u^{-a-1} e^{-u^b} du = (1/b) ∫_{root}^∞ v^{-a/b-1} e^{-v} dv
    let outer = integrate(
        |v: f64| v.powf(-a / b - 1.0) * (-v).exp(),
        root,
        root + 80.0,
        cfg,
    )?;
    let residual_mass = inner.value + outer.value / b;
    Ok(TiltedDecomposition {
        n,
        r0,
        residual_mass,
    })
}

/// The Hölder ratio `κ_{j-1} κ_{j+1} / κ_j²` (always `> 1`).
pub fn holder_ratio(measure: &LevyMeasure1D, j: u32, r: f64) -> Result<f64> {
    let lo = measure.partial_cumulant(j - 1, r)?;
    let mid = measure.partial_cumulant(j, r)?;
    let hi = measure.partial_cumulant(j + 1, r)?;
    Ok(lo * hi / (mid * mid))
}
